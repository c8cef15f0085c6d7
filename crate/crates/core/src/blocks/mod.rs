//! Composite building blocks: depthwise-separable units, shuffle and
//! X-shuffle blocks, the stem, stage transitions and multi-resolution
//! fusion.
//!
//! Every convolution stage carries a per-channel affine scale/shift
//! (initialised to 1/0) in place of batch normalisation, so forwards are
//! deterministic and single-sample.

mod dwsep;
mod fuse;
mod shuffle;
mod stem;

use crate::autograd::Ops;
use crate::error::Result;
use crate::init::Initializer;
use crate::scalar::Scalar;
use crate::tensor::{ConvSpec, Tensor};

pub use dwsep::{dw_sep_conv, dw_sep_conv_in, DwSepParams};
pub use fuse::{
    fuse_branches, fuse_branches_in, transition, transition_in, FuseParams, FusePath, TransitionParams, TransitionPath,
};
pub use shuffle::{
    shuffle_block, shuffle_block_in, x_shuffle_block, x_shuffle_block_in, BareParams, BlockType, BranchBlock,
    ShuffleDownParams, ShuffleParams, ShuffleUnit, XShuffleConfig, XShuffleParams,
};
pub use stem::{stem, stem_in, StemParams};

/// Walks named parameters. Names are dotted paths built from `prefix`.
pub trait Parameterized<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>);
}

/// Joins a dotted parameter-name prefix and a leaf name.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Per-channel scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub scale: Tensor<T>,
    pub shift: Tensor<T>,
}

impl<T: Scalar> Affine<T> {
    pub fn identity(channels: usize) -> Result<Self> {
        Ok(Self { scale: Tensor::ones(vec![channels])?, shift: Tensor::zeros(vec![channels])? })
    }
}

/// One convolution stage: conv, optional affine, optional ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvUnit<T> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub norm: Option<Affine<T>>,
    pub relu: bool,
}

impl<T: Scalar> ConvUnit<T> {
    /// Convolution followed by the affine stand-in norm.
    pub fn normed(spec: ConvSpec, relu: bool, init: &mut Initializer) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            weight: init.kaiming(&spec.weight_shape())?,
            bias: spec.has_bias.then(|| Tensor::zeros(vec![spec.out_channels])).transpose()?,
            norm: Some(Affine::identity(spec.out_channels)?),
            relu,
        })
    }

    /// Bare convolution (used for the prediction head).
    pub fn plain(spec: ConvSpec, init: &mut Initializer) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            weight: init.kaiming(&spec.weight_shape())?,
            bias: spec.has_bias.then(|| Tensor::zeros(vec![spec.out_channels])).transpose()?,
            norm: None,
            relu: false,
        })
    }

    pub fn forward_in<G: Ops<T>>(&self, g: &mut G, x: &G::V) -> Result<G::V> {
        let w = g.param(&self.weight);
        let b = self.bias.as_ref().map(|b| g.param(b));
        let mut y = g.conv2d(x, &w, b.as_ref(), &self.spec)?;
        if let Some(n) = &self.norm {
            let s = g.param(&n.scale);
            let t = g.param(&n.shift);
            y = g.channel_affine(&y, &s, &t)?;
        }
        if self.relu {
            y = g.relu(&y);
        }
        Ok(y)
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count() + self.norm.as_ref().map_or(0, |n| n.scale.numel() + n.shift.numel())
    }
}

impl<T> Parameterized<T> for ConvUnit<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        if let Some(b) = &self.bias {
            out.push((join(prefix, "bias"), b));
        }
        if let Some(n) = &self.norm {
            out.push((join(prefix, "scale"), &n.scale));
            out.push((join(prefix, "shift"), &n.shift));
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        if let Some(b) = &mut self.bias {
            out.push((join(prefix, "bias"), b));
        }
        if let Some(n) = &mut self.norm {
            out.push((join(prefix, "scale"), &mut n.scale));
            out.push((join(prefix, "shift"), &mut n.shift));
        }
    }
}

impl<T> Parameterized<T> for crate::susa::SusaParams<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "w_q"), &self.w_q));
        if let Some(b) = &self.q_bias {
            out.push((join(prefix, "q_bias"), b));
        }
        out.push((join(prefix, "w_v"), &self.w_v));
        if let Some(b) = &self.v_bias {
            out.push((join(prefix, "v_bias"), b));
        }
        out.push((join(prefix, "ln_gamma"), &self.ln_gamma));
        out.push((join(prefix, "ln_beta"), &self.ln_beta));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "w_q"), &mut self.w_q));
        if let Some(b) = &mut self.q_bias {
            out.push((join(prefix, "q_bias"), b));
        }
        out.push((join(prefix, "w_v"), &mut self.w_v));
        if let Some(b) = &mut self.v_bias {
            out.push((join(prefix, "v_bias"), b));
        }
        out.push((join(prefix, "ln_gamma"), &mut self.ln_gamma));
        out.push((join(prefix, "ln_beta"), &mut self.ln_beta));
    }
}
