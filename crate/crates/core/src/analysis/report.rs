use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRow {
    pub name: String,
    pub kind: String,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub params: u64,
    pub macs: u64,
}

/// Per-layer audit. `totals` is always the column sum of `rows`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsReport {
    #[serde(rename = "input")]
    pub input_hw: [usize; 2],
    pub rows: Vec<LayerRow>,
    pub totals: Totals,
}

/// `1234567` -> `"1,234,567"`.
pub(crate) fn grouped(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn millions(n: u64) -> String {
    format!("{:.2}M", n as f64 / 1e6)
}

impl FlopsReport {
    pub fn new(input_hw: [usize; 2], rows: Vec<LayerRow>) -> Self {
        let totals = Totals { params: rows.iter().map(|r| r.params).sum(), macs: rows.iter().map(|r| r.macs).sum() };
        Self { input_hw, rows, totals }
    }

    /// Sums rows whose names share the first `depth` dotted segments.
    pub fn grouped_by(&self, depth: usize) -> Vec<LayerRow> {
        let mut out: Vec<LayerRow> = Vec::new();
        for row in &self.rows {
            let key = row.name.split('.').take(depth).collect::<Vec<_>>().join(".");
            match out.last_mut() {
                Some(last) if last.name == key => {
                    last.params += row.params;
                    last.macs += row.macs;
                }
                _ => out.push(LayerRow { name: key, kind: "group".into(), params: row.params, macs: row.macs }),
            }
        }
        out
    }

    /// Sum over rows whose name contains `needle`.
    pub fn subtotal(&self, needle: &str) -> Totals {
        let rows = self.rows.iter().filter(|r| r.name.contains(needle));
        let (params, macs) = rows.fold((0, 0), |(p, m), r| (p + r.params, m + r.macs));
        Totals { params, macs }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table. Without `per_layer` only stage-level groups are
    /// listed.
    pub fn to_table(&self, per_layer: bool) -> String {
        let rows = if per_layer { self.rows.clone() } else { self.grouped_by(1) };
        let name_w = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(5);
        let kind_w = rows.iter().map(|r| r.kind.len()).max().unwrap_or(4).max(4);
        let mut out = format!(
            "# input {}x{}; MACs counted as FLOPs; softmax/sigmoid/LN/resize free\n",
            self.input_hw[0], self.input_hw[1]
        );
        out += &format!("{:<name_w$}  {:<kind_w$}  {:>13}  {:>15}\n", "layer", "kind", "params", "macs");
        for r in &rows {
            out += &format!(
                "{:<name_w$}  {:<kind_w$}  {:>13}  {:>15}\n",
                r.name,
                r.kind,
                grouped(r.params),
                grouped(r.macs)
            );
        }
        out += &format!(
            "total  params {} ({})  macs {} ({})\n",
            grouped(self.totals.params),
            millions(self.totals.params),
            grouped(self.totals.macs),
            millions(self.totals.macs)
        );
        out
    }
}
