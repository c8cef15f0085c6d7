use serde::{Deserialize, Serialize};

use super::{join, ConvUnit, Parameterized};
use crate::autograd::{Eager, Ops};
use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::scalar::Scalar;
use crate::susa::{susa_apply_in, Fusion, SusaAxis, SusaBias, SusaConfig, SusaParams};
use crate::tensor::{ConvSpec, Tensor};

/// Which transform the stride-1 blocks of the backbone use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockType {
    /// SUSA, depthwise 3x3, SUSA.
    XShuffle,
    /// pointwise, depthwise 3x3, pointwise.
    Shuffle,
    /// Depthwise 3x3 alone (both pointwise stages dropped).
    Bare,
}

impl BlockType {
    pub fn label(self) -> &'static str {
        match self {
            BlockType::XShuffle => "x_shuffle",
            BlockType::Shuffle => "shuffle",
            BlockType::Bare => "bare",
        }
    }
}

impl std::str::FromStr for BlockType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x_shuffle" | "x-shuffle" | "xshuffle" => Ok(BlockType::XShuffle),
            "shuffle" => Ok(BlockType::Shuffle),
            "bare" => Ok(BlockType::Bare),
            other => Err(Error::Usage(format!("unknown block type '{other}' (expected x_shuffle, shuffle or bare)"))),
        }
    }
}

/// SUSA order and fusion mode of an X-shuffle block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct XShuffleConfig {
    pub order: (SusaAxis, SusaAxis),
    pub fusion: Fusion,
}

impl Default for XShuffleConfig {
    /// W-wise first so the H-wise unit sees the depthwise-enlarged field.
    fn default() -> Self {
        Self { order: (SusaAxis::WWise, SusaAxis::HWise), fusion: Fusion::Multiply }
    }
}

impl XShuffleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order.0 == self.order.1 {
            return Err(Error::Spec(format!(
                "X-shuffle SUSA order must use both axes, got ({}, {})",
                self.order.0.label(),
                self.order.1.label()
            )));
        }
        Ok(())
    }
}

/// Stride-1 shuffle block transform: pw -> dw -> pw on half the channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleParams<T> {
    pub pw1: ConvUnit<T>,
    pub dw: ConvUnit<T>,
    pub pw2: ConvUnit<T>,
}

impl<T: Scalar> ShuffleParams<T> {
    /// `channels` is the full block width; the transform runs on half.
    pub fn init(channels: usize, init: &mut Initializer) -> Result<Self> {
        let half = even_half(channels)?;
        Ok(Self {
            pw1: ConvUnit::normed(ConvSpec::pointwise(half, half), true, init)?,
            dw: ConvUnit::normed(ConvSpec::depthwise3x3(half, 1), false, init)?,
            pw2: ConvUnit::normed(ConvSpec::pointwise(half, half), true, init)?,
        })
    }

    pub fn channels(&self) -> usize {
        2 * self.dw.spec.in_channels
    }

    fn transform_in<G: Ops<T>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        let y = self.pw1.forward_in(g, x)?;
        let y = self.dw.forward_in(g, &y)?;
        self.pw2.forward_in(g, &y)
    }
}

/// ShuffleNetV2 stride-2 unit. Both branches see the full input; each emits
/// half of `out_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleDownParams<T> {
    pub branch1_dw: ConvUnit<T>,
    pub branch1_pw: ConvUnit<T>,
    pub branch2_pw1: ConvUnit<T>,
    pub branch2_dw: ConvUnit<T>,
    pub branch2_pw2: ConvUnit<T>,
}

impl<T: Scalar> ShuffleDownParams<T> {
    pub fn init(in_channels: usize, out_channels: usize, init: &mut Initializer) -> Result<Self> {
        let half = even_half(out_channels)?;
        Ok(Self {
            branch1_dw: ConvUnit::normed(ConvSpec::depthwise3x3(in_channels, 2), false, init)?,
            branch1_pw: ConvUnit::normed(ConvSpec::pointwise(in_channels, half), true, init)?,
            branch2_pw1: ConvUnit::normed(ConvSpec::pointwise(in_channels, half), true, init)?,
            branch2_dw: ConvUnit::normed(ConvSpec::depthwise3x3(half, 2), false, init)?,
            branch2_pw2: ConvUnit::normed(ConvSpec::pointwise(half, half), true, init)?,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.branch1_dw.spec.in_channels
    }

    pub fn out_channels(&self) -> usize {
        2 * self.branch1_pw.spec.out_channels
    }
}

/// Shuffle block of either stride.
#[derive(Debug, Clone, PartialEq)]
pub enum ShuffleUnit<T> {
    Stride1(ShuffleParams<T>),
    Stride2(ShuffleDownParams<T>),
}

impl<T> ShuffleUnit<T> {
    pub fn stride(&self) -> usize {
        match self {
            ShuffleUnit::Stride1(_) => 1,
            ShuffleUnit::Stride2(_) => 2,
        }
    }
}

/// Depthwise-only transform used by the `bare` ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct BareParams<T> {
    pub dw: ConvUnit<T>,
}

impl<T: Scalar> BareParams<T> {
    pub fn init(channels: usize, init: &mut Initializer) -> Result<Self> {
        let half = even_half(channels)?;
        Ok(Self { dw: ConvUnit::normed(ConvSpec::depthwise3x3(half, 1), false, init)? })
    }
}

/// X-shuffle transform: SUSA -> dw 3x3 -> SUSA.
#[derive(Debug, Clone, PartialEq)]
pub struct XShuffleParams<T> {
    pub susa1: SusaParams<T>,
    pub dw: ConvUnit<T>,
    pub susa2: SusaParams<T>,
}

impl<T: Scalar> XShuffleParams<T> {
    pub fn init(channels: usize, bias: SusaBias, init: &mut Initializer) -> Result<Self> {
        let half = even_half(channels)?;
        Ok(Self {
            susa1: SusaParams::init(half, bias, init)?,
            dw: ConvUnit::normed(ConvSpec::depthwise3x3(half, 1), false, init)?,
            susa2: SusaParams::init(half, bias, init)?,
        })
    }

    pub fn channels(&self) -> usize {
        2 * self.dw.spec.in_channels
    }

    fn transform_in<G: Ops<T>>(&self, g: &mut G, x: &G::V, config: &XShuffleConfig) -> Result<G::V> {
        config.validate()?;
        let half = self.dw.spec.in_channels;
        let first = SusaConfig::new(config.order.0, config.fusion, half);
        let second = SusaConfig::new(config.order.1, config.fusion, half);
        let y = susa_apply_in(g, x, &self.susa1, &first)?;
        let y = self.dw.forward_in(g, &y)?;
        susa_apply_in(g, &y, &self.susa2, &second)
    }
}

/// One stride-1 block of a branch.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchBlock<T> {
    XShuffle(XShuffleParams<T>, XShuffleConfig),
    Shuffle(ShuffleParams<T>),
    Bare(BareParams<T>),
}

impl<T: Scalar> BranchBlock<T> {
    pub fn init(
        kind: BlockType,
        channels: usize,
        config: XShuffleConfig,
        bias: SusaBias,
        init: &mut Initializer,
    ) -> Result<Self> {
        Ok(match kind {
            BlockType::XShuffle => BranchBlock::XShuffle(XShuffleParams::init(channels, bias, init)?, config),
            BlockType::Shuffle => BranchBlock::Shuffle(ShuffleParams::init(channels, init)?),
            BlockType::Bare => BranchBlock::Bare(BareParams::init(channels, init)?),
        })
    }

    pub fn block_type(&self) -> BlockType {
        match self {
            BranchBlock::XShuffle(..) => BlockType::XShuffle,
            BranchBlock::Shuffle(_) => BlockType::Shuffle,
            BranchBlock::Bare(_) => BlockType::Bare,
        }
    }

    pub fn forward_in<G: Ops<T>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        split_transform(g, x, |g, half| match self {
            BranchBlock::XShuffle(p, c) => p.transform_in(g, half, c),
            BranchBlock::Shuffle(p) => p.transform_in(g, half),
            BranchBlock::Bare(p) => p.dw.forward_in(g, half),
        })
    }
}

fn even_half(channels: usize) -> Result<usize> {
    if channels == 0 || !channels.is_multiple_of(2) {
        return Err(Error::Spec(format!("shuffle-style blocks need an even, nonzero channel count, got {channels}")));
    }
    Ok(channels / 2)
}

/// Split channels in half, keep the first half, transform the second,
/// concatenate and shuffle with two groups.
fn split_transform<T: Scalar, G: Ops<T>>(
    g: &mut G,
    x: &G::V,
    transform: impl FnOnce(&mut G, &G::V) -> Result<G::V>,
) -> Result<G::V> {
    let shape = g.shape(x);
    if shape.len() != 3 {
        return Err(Error::Dimension(format!("block input must be [C, H, W], got {shape:?}")));
    }
    let half = even_half(shape[0])?;
    let keep = g.slice_channels(x, 0, half)?;
    let moving = g.slice_channels(x, half, half)?;
    let moved = transform(g, &moving)?;
    let joined = g.concat_channels(&[keep, moved])?;
    g.shuffle_channels(&joined, 2)
}

pub fn shuffle_block_in<T: Scalar, G: Ops<T>>(g: &mut G, x: &G::V, unit: &ShuffleUnit<T>) -> Result<G::V> {
    match unit {
        ShuffleUnit::Stride1(p) => {
            let c = g.shape(x).first().copied().unwrap_or(0);
            if c != p.channels() {
                return Err(Error::Dimension(format!("shuffle block built for {} channels got {c}", p.channels())));
            }
            split_transform(g, x, |g, half| p.transform_in(g, half))
        }
        ShuffleUnit::Stride2(p) => {
            let left = p.branch1_dw.forward_in(g, x)?;
            let left = p.branch1_pw.forward_in(g, &left)?;
            let right = p.branch2_pw1.forward_in(g, x)?;
            let right = p.branch2_dw.forward_in(g, &right)?;
            let right = p.branch2_pw2.forward_in(g, &right)?;
            let joined = g.concat_channels(&[left, right])?;
            g.shuffle_channels(&joined, 2)
        }
    }
}

/// Shuffle block; the stride is carried by the unit variant.
pub fn shuffle_block<T: Scalar>(x: &Tensor<T>, unit: &ShuffleUnit<T>) -> Result<Tensor<T>> {
    shuffle_block_in(&mut Eager, x, unit)
}

pub fn x_shuffle_block_in<T: Scalar, G: Ops<T>>(
    g: &mut G,
    x: &G::V,
    params: &XShuffleParams<T>,
    config: &XShuffleConfig,
) -> Result<G::V> {
    split_transform(g, x, |g, half| params.transform_in(g, half, config))
}

pub fn x_shuffle_block<T: Scalar>(
    x: &Tensor<T>,
    params: &XShuffleParams<T>,
    config: &XShuffleConfig,
) -> Result<Tensor<T>> {
    x_shuffle_block_in(&mut Eager, x, params, config)
}

impl<T> Parameterized<T> for ShuffleParams<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.pw1.visit(&join(prefix, "pw1"), out);
        self.dw.visit(&join(prefix, "dw"), out);
        self.pw2.visit(&join(prefix, "pw2"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.pw1.visit_mut(&join(prefix, "pw1"), out);
        self.dw.visit_mut(&join(prefix, "dw"), out);
        self.pw2.visit_mut(&join(prefix, "pw2"), out);
    }
}

impl<T> Parameterized<T> for ShuffleDownParams<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.branch1_dw.visit(&join(prefix, "branch1_dw"), out);
        self.branch1_pw.visit(&join(prefix, "branch1_pw"), out);
        self.branch2_pw1.visit(&join(prefix, "branch2_pw1"), out);
        self.branch2_dw.visit(&join(prefix, "branch2_dw"), out);
        self.branch2_pw2.visit(&join(prefix, "branch2_pw2"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.branch1_dw.visit_mut(&join(prefix, "branch1_dw"), out);
        self.branch1_pw.visit_mut(&join(prefix, "branch1_pw"), out);
        self.branch2_pw1.visit_mut(&join(prefix, "branch2_pw1"), out);
        self.branch2_dw.visit_mut(&join(prefix, "branch2_dw"), out);
        self.branch2_pw2.visit_mut(&join(prefix, "branch2_pw2"), out);
    }
}

impl<T> Parameterized<T> for XShuffleParams<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.susa1.visit(&join(prefix, "susa1"), out);
        self.dw.visit(&join(prefix, "dw"), out);
        self.susa2.visit(&join(prefix, "susa2"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.susa1.visit_mut(&join(prefix, "susa1"), out);
        self.dw.visit_mut(&join(prefix, "dw"), out);
        self.susa2.visit_mut(&join(prefix, "susa2"), out);
    }
}

impl<T> Parameterized<T> for BranchBlock<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        match self {
            BranchBlock::XShuffle(p, _) => p.visit(prefix, out),
            BranchBlock::Shuffle(p) => p.visit(prefix, out),
            BranchBlock::Bare(p) => p.dw.visit(&join(prefix, "dw"), out),
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        match self {
            BranchBlock::XShuffle(p, _) => p.visit_mut(prefix, out),
            BranchBlock::Shuffle(p) => p.visit_mut(prefix, out),
            BranchBlock::Bare(p) => p.dw.visit_mut(&join(prefix, "dw"), out),
        }
    }
}
