use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocks::{BlockType, XShuffleConfig};
use crate::error::{Error, Result};
use crate::susa::{Fusion, SusaAxis, SusaBias};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "X18", alias = "x18")]
    X18,
    #[serde(rename = "X30", alias = "x30")]
    X30,
    #[serde(rename = "custom", alias = "Custom")]
    Custom,
}

impl Variant {
    /// Modules per stage for the named variants.
    pub fn modules(self) -> Option<&'static [usize]> {
        match self {
            Variant::X18 => Some(&[2, 4, 2]),
            Variant::X30 => Some(&[3, 8, 3]),
            Variant::Custom => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub branch_channels: Vec<usize>,
    pub num_modules: usize,
    #[serde(default = "default_blocks")]
    pub blocks_per_module: usize,
}

fn default_blocks() -> usize {
    2
}

fn default_base() -> usize {
    40
}

fn default_stem() -> usize {
    32
}

fn default_joints() -> usize {
    17
}

fn default_hw() -> [usize; 2] {
    [256, 192]
}

fn default_block_type() -> BlockType {
    BlockType::XShuffle
}

fn default_order() -> [SusaAxis; 2] {
    let o = XShuffleConfig::default().order;
    [o.0, o.1]
}

fn default_fusion() -> Fusion {
    Fusion::Multiply
}

/// Declarative description of an X-HRNet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub variant: Variant,
    #[serde(default = "default_base")]
    pub base_channels: usize,
    #[serde(default = "default_stem")]
    pub stem_channels: usize,
    pub stages: Vec<StageSpec>,
    #[serde(default = "default_block_type")]
    pub block_type: BlockType,
    #[serde(default = "default_order")]
    pub susa_order: [SusaAxis; 2],
    #[serde(default = "default_fusion")]
    pub fusion_mode: Fusion,
    #[serde(default)]
    pub susa_bias: SusaBias,
    #[serde(default = "default_joints")]
    pub num_joints: usize,
    #[serde(default = "default_hw")]
    pub input_hw: [usize; 2],
}

const PRESETS: &[(&str, &str)] = &[
    ("x18", include_str!("../../presets/x18.json")),
    ("x30", include_str!("../../presets/x30.json")),
    ("x18-shuffle", include_str!("../../presets/x18-shuffle.json")),
    ("x18-bare", include_str!("../../presets/x18-bare.json")),
];

impl NetConfig {
    /// Names accepted by [`NetConfig::preset`].
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == lower).ok_or_else(|| {
            Error::Usage(format!(
                "unknown preset '{name}' (available: {})",
                Self::preset_names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Self::from_json(text)
    }

    pub fn x18() -> Self {
        Self::preset("x18").expect("bundled preset is valid")
    }

    pub fn x30() -> Self {
        Self::preset("x30").expect("bundled preset is valid")
    }

    /// Parses and validates. Parse errors carry serde's line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_block_type(mut self, block_type: BlockType) -> Self {
        self.block_type = block_type;
        self
    }

    pub fn with_susa_order(mut self, first: SusaAxis, second: SusaAxis) -> Self {
        self.susa_order = [first, second];
        self
    }

    pub fn x_shuffle(&self) -> XShuffleConfig {
        XShuffleConfig { order: (self.susa_order[0], self.susa_order[1]), fusion: self.fusion_mode }
    }

    /// Branch count of the final stage.
    pub fn max_branches(&self) -> usize {
        self.stages.iter().map(|s| s.branch_channels.len()).max().unwrap_or(1)
    }

    /// Input extents must be multiples of this so every branch resolution
    /// is integral.
    pub fn total_stride(&self) -> usize {
        4 << (self.max_branches() - 1)
    }

    /// Widths entering stage `s` (the stem output for the first stage).
    pub fn widths_before(&self, s: usize) -> Vec<usize> {
        if s == 0 {
            vec![self.stem_channels]
        } else {
            self.stages[s - 1].branch_channels.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.base_channels;
        if c == 0 || !c.is_multiple_of(2) {
            return Err(Error::config("base_channels", format!("must be even and positive, got {c}")));
        }
        if self.stem_channels == 0 || !self.stem_channels.is_multiple_of(2) {
            return Err(Error::config(
                "stem_channels",
                format!("must be even and positive, got {}", self.stem_channels),
            ));
        }
        if self.stages.is_empty() {
            return Err(Error::config("stages", "at least one stage is required"));
        }
        for (s, stage) in self.stages.iter().enumerate() {
            let key = format!("stages[{s}]");
            let n = stage.branch_channels.len();
            if n != s + 2 {
                return Err(Error::config(
                    format!("{key}.branch_channels"),
                    format!("stage {} must have {} branches (each stage adds one), got {n}", s + 1, s + 2),
                ));
            }
            for (b, &w) in stage.branch_channels.iter().enumerate() {
                let expect = c << b;
                if w != expect {
                    return Err(Error::config(
                        format!("{key}.branch_channels[{b}]"),
                        format!("channel-doubling invariant C*2^b requires {expect}, got {w}"),
                    ));
                }
            }
            if stage.num_modules == 0 {
                return Err(Error::config(format!("{key}.num_modules"), "must be at least 1"));
            }
            if stage.blocks_per_module == 0 {
                return Err(Error::config(format!("{key}.blocks_per_module"), "must be at least 1"));
            }
        }
        if let Some(modules) = self.variant.modules() {
            let key = format!("{:?}", self.variant);
            if self.stages.len() != modules.len() {
                return Err(Error::config(
                    "stages",
                    format!("{key} has {} stages, got {}", modules.len(), self.stages.len()),
                ));
            }
            if c != 40 {
                return Err(Error::config("base_channels", format!("{key} uses 40, got {c}")));
            }
            for (s, (stage, &m)) in self.stages.iter().zip(modules).enumerate() {
                if stage.num_modules != m {
                    return Err(Error::config(
                        format!("stages[{s}].num_modules"),
                        format!("{key} uses {m} modules here, got {}", stage.num_modules),
                    ));
                }
                if stage.blocks_per_module != 2 {
                    return Err(Error::config(
                        format!("stages[{s}].blocks_per_module"),
                        format!("{key} uses 2 blocks per module, got {}", stage.blocks_per_module),
                    ));
                }
            }
        }
        if self.susa_order[0] == self.susa_order[1] {
            return Err(Error::config("susa_order", "the two SUSA units must use different axes"));
        }
        if self.num_joints == 0 {
            return Err(Error::config("num_joints", "must be at least 1"));
        }
        let stride = self.total_stride();
        let [h, w] = self.input_hw;
        if h == 0 || w == 0 || h % stride != 0 || w % stride != 0 {
            return Err(Error::config("input_hw", format!("{h}x{w} is not divisible by the total stride {stride}")));
        }
        Ok(())
    }
}

/// Reads and validates a JSON config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<NetConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    NetConfig::from_json(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
