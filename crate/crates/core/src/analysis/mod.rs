//! Structural parameter and MAC auditing.
//!
//! Counting convention: one multiply-accumulate is one FLOP. A convolution
//! costs `C_out * H' * W' * (C_in / groups * kh * kw)`, plus `C_out * H' * W'`
//! with a bias. Each per-channel affine norm costs one MAC per element.
//! Softmax, sigmoid, LayerNorm, ReLU, resizing, additions and channel
//! reorganisation are free. A SUSA unit is charged for its two 1x1 kernels
//! only; its parameter-free inner product and fusion product are reported
//! separately by [`cost_compare`].

mod cost;
mod report;

use crate::backbone::{NetConfig, Network};
use crate::blocks::{join, BlockType};
use crate::error::{Error, Result};
use crate::susa::{SusaAxis, SusaBias};
use crate::tensor::ConvSpec;

pub use cost::{cost_compare, CostComparison};
pub use report::{FlopsReport, LayerRow, Totals};

/// Anything that determines a network's structure.
pub trait Auditable {
    fn net_config(&self) -> &NetConfig;
}

impl Auditable for NetConfig {
    fn net_config(&self) -> &NetConfig {
        self
    }
}

impl<T> Auditable for Network<T>
where
    T: crate::Scalar,
{
    fn net_config(&self) -> &NetConfig {
        self.config()
    }
}

/// Exact parameter count, head and affine norms included.
pub fn count_params(net: &impl Auditable) -> Result<u64> {
    let cfg = net.net_config();
    Ok(count_macs(cfg, (cfg.input_hw[0], cfg.input_hw[1]))?.totals.params)
}

/// Per-layer audit at the given input extents, rows in registry order.
pub fn count_macs(net: &impl Auditable, input_hw: (usize, usize)) -> Result<FlopsReport> {
    let cfg = net.net_config();
    cfg.validate()?;
    let (h, w) = input_hw;
    let stride = cfg.total_stride();
    if h == 0 || w == 0 || h % stride != 0 || w % stride != 0 {
        return Err(Error::Dimension(format!("input {h}x{w} is not divisible by the total stride {stride}")));
    }
    let mut a = Audit::default();
    let (h2, w2) = (h / 2, w / 2);
    let (h4, w4) = (h / 4, w / 4);
    let sc = cfg.stem_channels;
    a.conv("stem.conv", ConvSpec::standard(3, sc, 3, 2), (h, w), true)?;
    a.shuffle_down("stem.down", sc, sc, (h2, w2))?;

    let hw_of = |b: usize| (h4 >> b, w4 >> b);
    for (s, stage) in cfg.stages.iter().enumerate() {
        let sp = format!("stage{}", s + 1);
        let before = cfg.widths_before(s);
        let widths = &stage.branch_channels;
        for (b, &cout) in widths.iter().enumerate() {
            let name = format!("{sp}.transition.branch{b}");
            if let Some(&cin) = before.get(b) {
                if cin != cout {
                    a.dw_sep(&name, cin, cout, 1, hw_of(b))?;
                }
            } else {
                let cin = *before.last().expect("nonempty");
                a.dw_sep(&name, cin, cout, 2, hw_of(b - 1))?;
            }
        }
        for m in 0..stage.num_modules {
            let mp = format!("{sp}.module{m}");
            for (b, &c) in widths.iter().enumerate() {
                for k in 0..stage.blocks_per_module {
                    let bp = format!("{mp}.branch{b}.block{k}");
                    a.block(&bp, cfg, c, hw_of(b))?;
                }
            }
            for i in 0..widths.len() {
                for j in 0..widths.len() {
                    let name = format!("{mp}.fuse.{j}_to_{i}");
                    if j > i {
                        a.dw_sep(&name, widths[j], widths[i], 1, hw_of(j))?;
                    } else if j < i {
                        let steps = i - j;
                        for k in 0..steps {
                            let cout = if k + 1 == steps { widths[i] } else { widths[j] };
                            a.dw_sep(&join(&name, &format!("step{k}")), widths[j], cout, 2, hw_of(j + k))?;
                        }
                    }
                }
            }
        }
    }
    let head = ConvSpec::pointwise(cfg.base_channels, cfg.num_joints).with_bias(true);
    a.conv("head", head, (h4, w4), false)?;
    Ok(FlopsReport::new([h, w], a.rows))
}

/// Row accumulator that mirrors the network topology.
#[derive(Default)]
struct Audit {
    rows: Vec<LayerRow>,
}

impl Audit {
    fn conv(&mut self, name: &str, spec: ConvSpec, in_hw: (usize, usize), norm: bool) -> Result<(usize, usize)> {
        let (oh, ow) = spec.output_hw(in_hw.0, in_hw.1)?;
        let mut params = spec.param_count() as u64;
        let mut macs = spec.macs(in_hw.0, in_hw.1)?;
        if norm {
            params += 2 * spec.out_channels as u64;
            macs += (spec.out_channels * oh * ow) as u64;
        }
        let kind = if spec.kernel == (1, 1) {
            if spec.has_bias && !norm {
                "head"
            } else {
                "pwconv"
            }
        } else if spec.groups > 1 && spec.groups == spec.in_channels {
            "dwconv"
        } else {
            "conv"
        };
        self.rows.push(LayerRow { name: name.to_string(), kind: kind.to_string(), params, macs });
        Ok((oh, ow))
    }

    fn dw_sep(&mut self, name: &str, cin: usize, cout: usize, stride: usize, in_hw: (usize, usize)) -> Result<()> {
        let hw = self.conv(&join(name, "dw"), ConvSpec::depthwise3x3(cin, stride), in_hw, true)?;
        self.conv(&join(name, "pw"), ConvSpec::pointwise(cin, cout), hw, true)?;
        Ok(())
    }

    fn shuffle_down(&mut self, name: &str, cin: usize, cout: usize, hw: (usize, usize)) -> Result<()> {
        let half = cout / 2;
        let down = self.conv(&join(name, "branch1_dw"), ConvSpec::depthwise3x3(cin, 2), hw, true)?;
        self.conv(&join(name, "branch1_pw"), ConvSpec::pointwise(cin, half), down, true)?;
        self.conv(&join(name, "branch2_pw1"), ConvSpec::pointwise(cin, half), hw, true)?;
        self.conv(&join(name, "branch2_dw"), ConvSpec::depthwise3x3(half, 2), hw, true)?;
        self.conv(&join(name, "branch2_pw2"), ConvSpec::pointwise(half, half), down, true)?;
        Ok(())
    }

    fn susa(&mut self, name: &str, c: usize, (h, w): (usize, usize), axis: SusaAxis, bias: SusaBias) {
        let (kept, other) = match axis {
            SusaAxis::HWise => (h, w),
            SusaAxis::WWise => (w, h),
        };
        let c64 = c as u64;
        let q = if bias.grouping { 2 } else { 1 };
        let v = c64 * c64 + if bias.transform { c64 } else { 0 };
        self.rows.push(LayerRow {
            name: name.to_string(),
            kind: format!("susa_{}", axis.label().to_ascii_lowercase()),
            params: q * c64 + v + 2 * c64,
            macs: q * c64 * other as u64 + v * kept as u64,
        });
    }

    fn block(&mut self, prefix: &str, cfg: &NetConfig, c: usize, hw: (usize, usize)) -> Result<()> {
        let half = c / 2;
        match cfg.block_type {
            BlockType::XShuffle => {
                self.susa(&join(prefix, "susa1"), half, hw, cfg.susa_order[0], cfg.susa_bias);
                self.conv(&join(prefix, "dw"), ConvSpec::depthwise3x3(half, 1), hw, true)?;
                self.susa(&join(prefix, "susa2"), half, hw, cfg.susa_order[1], cfg.susa_bias);
            }
            BlockType::Shuffle => {
                self.conv(&join(prefix, "pw1"), ConvSpec::pointwise(half, half), hw, true)?;
                self.conv(&join(prefix, "dw"), ConvSpec::depthwise3x3(half, 1), hw, true)?;
                self.conv(&join(prefix, "pw2"), ConvSpec::pointwise(half, half), hw, true)?;
            }
            BlockType::Bare => {
                self.conv(&join(prefix, "dw"), ConvSpec::depthwise3x3(half, 1), hw, true)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::build_network;

    #[test]
    fn x18_reference_counts() {
        let r = count_macs(&NetConfig::x18(), (256, 192)).unwrap();
        assert_eq!(r.totals.params, 1_302_073);
        assert!((r.totals.macs as f64 / 1e6 - 190.79).abs() < 0.01, "{}", r.totals.macs);
    }

    #[test]
    fn rows_cover_every_registry_name_once() {
        let net: Network<f64> = build_network(&NetConfig::x18(), 0).unwrap();
        let r = count_macs(&net, (256, 192)).unwrap();
        for (name, _) in net.named_parameters() {
            let owners = r.rows.iter().filter(|row| name.starts_with(&format!("{}.", row.name))).count();
            assert_eq!(owners, 1, "{name}");
        }
        assert_eq!(count_params(&net).unwrap(), net.param_count() as u64);
    }

    #[test]
    fn indivisible_input_rejected() {
        assert!(matches!(count_macs(&NetConfig::x18(), (250, 192)), Err(Error::Dimension(_))));
    }
}
