//! Spatially unidimensional self-attention.
//!
//! A SUSA unit summarises a `[C, H, W]` feature map along one spatial axis
//! and produces a per-channel attention vector over the other:
//!
//! 1. *Stripe context modeling*: average over the summarised axis, apply a
//!    per-channel 1x1 kernel, softmax over the remaining axis to obtain
//!    grouping weights, and contract the input against them. For the
//!    H-wise unit this yields a `C x H` stripe context.
//! 2. *Unidimensional transform*: a single channel-mixing 1x1 convolution,
//!    LayerNorm across channels, and a sigmoid.
//! 3. *Fusion*: the attention vector is broadcast back over the input,
//!    multiplicatively by default.
//!
//! [`gc_block`] is the global-context reference the unit is derived from.

mod gc;

use serde::{Deserialize, Serialize};

use crate::autograd::{Eager, Ops};
use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::scalar::Scalar;
use crate::tensor::{ConvSpec, Tensor};

pub use gc::{gc_block, gc_block_in, GcParams};

/// Which spatial extent the attention vector runs along.
///
/// An H-wise unit averages over H to build grouping weights along W, then
/// emits a `C x H` attention vector broadcast across W. W-wise mirrors it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SusaAxis {
    #[serde(rename = "H", alias = "h")]
    HWise,
    #[serde(rename = "W", alias = "w")]
    WWise,
}

impl SusaAxis {
    /// Axis of a `[C, H, W]` tensor the attention vector runs along; it is
    /// also the axis averaged away before the grouping kernel.
    fn kept_axis(self) -> usize {
        match self {
            SusaAxis::HWise => 1,
            SusaAxis::WWise => 2,
        }
    }

    /// Axis the grouping weights run along and the inner product contracts.
    fn contracted_axis(self) -> usize {
        3 - self.kept_axis()
    }

    pub fn other(self) -> Self {
        match self {
            SusaAxis::HWise => SusaAxis::WWise,
            SusaAxis::WWise => SusaAxis::HWise,
        }
    }

    /// Length of the attention vector for an `h x w` map.
    pub fn attention_len(self, h: usize, w: usize) -> usize {
        match self {
            SusaAxis::HWise => h,
            SusaAxis::WWise => w,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SusaAxis::HWise => "H",
            SusaAxis::WWise => "W",
        }
    }
}

/// How the attention vector is merged back into the features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fusion {
    #[serde(rename = "mul", alias = "multiply")]
    Multiply,
    #[serde(rename = "add")]
    Add,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SusaConfig {
    pub axis: SusaAxis,
    pub fusion: Fusion,
    pub channels: usize,
}

impl SusaConfig {
    pub fn new(axis: SusaAxis, fusion: Fusion, channels: usize) -> Self {
        Self { axis, fusion, channels }
    }
}

/// Which of the two 1x1 kernels carry a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SusaBias {
    pub grouping: bool,
    pub transform: bool,
}

impl Default for SusaBias {
    fn default() -> Self {
        Self { grouping: true, transform: false }
    }
}

/// Learnable parameters of one SUSA unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SusaParams<T> {
    /// Per-channel grouping kernel, `[C, 1, 1, 1]` (a 1x1 conv with groups = C).
    pub w_q: Tensor<T>,
    pub q_bias: Option<Tensor<T>>,
    /// Channel-mixing transform kernel, `[C, C, 1, 1]`.
    pub w_v: Tensor<T>,
    pub v_bias: Option<Tensor<T>>,
    pub ln_gamma: Tensor<T>,
    pub ln_beta: Tensor<T>,
    pub ln_eps: T,
}

pub const DEFAULT_LN_EPS: f64 = 1e-5;

impl<T: Scalar> SusaParams<T> {
    /// Kaiming-uniform kernels, `gamma = 1`, `beta = 0`, zero biases.
    pub fn init(channels: usize, bias: SusaBias, init: &mut Initializer) -> Result<Self> {
        let c = channels;
        Ok(Self {
            w_q: init.kaiming(&[c, 1, 1, 1])?,
            q_bias: bias.grouping.then(|| Tensor::zeros(vec![c])).transpose()?,
            w_v: init.kaiming(&[c, c, 1, 1])?,
            v_bias: bias.transform.then(|| Tensor::zeros(vec![c])).transpose()?,
            ln_gamma: Tensor::ones(vec![c])?,
            ln_beta: Tensor::zeros(vec![c])?,
            ln_eps: T::of(DEFAULT_LN_EPS),
        })
    }

    pub fn channels(&self) -> usize {
        self.ln_gamma.numel()
    }

    pub fn grouping_spec(&self) -> ConvSpec {
        let c = self.channels();
        ConvSpec { groups: c, ..ConvSpec::pointwise(c, c) }.with_bias(self.q_bias.is_some())
    }

    pub fn transform_spec(&self) -> ConvSpec {
        let c = self.channels();
        ConvSpec::pointwise(c, c).with_bias(self.v_bias.is_some())
    }

    pub fn param_count(&self) -> usize {
        self.grouping_spec().param_count() + self.transform_spec().param_count() + 2 * self.channels()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        let vec_ok = |t: &Option<Tensor<T>>| t.as_ref().is_none_or(|b| b.shape() == [c]);
        if self.w_q.shape() != [c, 1, 1, 1]
            || self.w_v.shape() != [c, c, 1, 1]
            || self.ln_beta.shape() != [c]
            || !vec_ok(&self.q_bias)
            || !vec_ok(&self.v_bias)
        {
            return Err(Error::Dimension(format!(
                "SUSA parameters inconsistent with {c} channels (w_q {:?}, w_v {:?})",
                self.w_q.shape(),
                self.w_v.shape()
            )));
        }
        if !(self.ln_eps > T::zero()) {
            return Err(Error::Spec("SUSA LayerNorm eps must be positive".into()));
        }
        Ok(())
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        self.validate()?;
        if shape.len() != 3 || shape[0] != self.channels() {
            return Err(Error::Dimension(format!("SUSA with {} channels got input {shape:?}", self.channels())));
        }
        Ok(())
    }
}

/// Stripe context `C x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripeContext<T> {
    pub axis: SusaAxis,
    pub values: Tensor<T>,
}

/// Attention vector `C x L`, entries in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionVector<T> {
    pub axis: SusaAxis,
    pub values: Tensor<T>,
}

/// Stripe context modeling on an arbitrary [`Ops`] backend.
///
/// Returns `(grouping, context)` as rank-3 values: for H-wise the grouping
/// weights are `[C, 1, W]` and the context is `[C, H, 1]`; W-wise is the
/// transpose of both.
pub fn stripe_context_in<T: Scalar, G: Ops<T>>(
    g: &mut G,
    x: &G::V,
    params: &SusaParams<T>,
    axis: SusaAxis,
) -> Result<(G::V, G::V)> {
    params.check_input(&g.shape(x))?;
    let averaged = g.reduce_mean(x, axis.kept_axis())?;
    let w_q = g.param(&params.w_q);
    let q_bias = params.q_bias.as_ref().map(|b| g.param(b));
    let logits = g.conv2d(&averaged, &w_q, q_bias.as_ref(), &params.grouping_spec())?;
    let grouping = g.softmax(&logits, axis.contracted_axis())?;
    let weighted = g.mul(x, &grouping)?;
    let context = g.reduce_sum(&weighted, axis.contracted_axis())?;
    Ok((grouping, context))
}

/// Unidimensional transform of a rank-3 stripe context (`[C, L, 1]` or
/// `[C, 1, L]`) into an attention value of the same shape.
pub fn unidim_transform_in<T: Scalar, G: Ops<T>>(g: &mut G, context: &G::V, params: &SusaParams<T>) -> Result<G::V> {
    params.validate()?;
    let w_v = g.param(&params.w_v);
    let v_bias = params.v_bias.as_ref().map(|b| g.param(b));
    let mixed = g.conv2d(context, &w_v, v_bias.as_ref(), &params.transform_spec())?;
    let gamma = g.param(&params.ln_gamma);
    let beta = g.param(&params.ln_beta);
    let normed = g.layer_norm_channels(&mixed, &gamma, &beta, params.ln_eps)?;
    Ok(g.sigmoid(&normed))
}

/// Full SUSA unit on an arbitrary [`Ops`] backend.
pub fn susa_apply_in<T: Scalar, G: Ops<T>>(
    g: &mut G,
    x: &G::V,
    params: &SusaParams<T>,
    config: &SusaConfig,
) -> Result<G::V> {
    if config.channels != params.channels() {
        return Err(Error::Dimension(format!(
            "SUSA config has {} channels, parameters have {}",
            config.channels,
            params.channels()
        )));
    }
    let (_, context) = stripe_context_in(g, x, params, config.axis)?;
    let attention = unidim_transform_in(g, &context, params)?;
    match config.fusion {
        Fusion::Multiply => g.mul(x, &attention),
        Fusion::Add => g.add(x, &attention),
    }
}

fn to_matrix<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let c = t.shape()[0];
    t.reshape(vec![c, t.numel() / c])
}

/// Stripe context modeling. Returns the grouping weights (`C x W` for
/// H-wise, `C x H` for W-wise) and the stripe context (`C x H` / `C x W`).
pub fn stripe_context<T: Scalar>(
    x: &Tensor<T>,
    params: &SusaParams<T>,
    axis: SusaAxis,
) -> Result<(Tensor<T>, StripeContext<T>)> {
    let (grouping, context) = stripe_context_in(&mut Eager, x, params, axis)?;
    Ok((to_matrix(&grouping)?, StripeContext { axis, values: to_matrix(&context)? }))
}

/// Unidimensional transform: `sigmoid(LN(w_v x context))`.
pub fn unidim_transform<T: Scalar>(context: &StripeContext<T>, params: &SusaParams<T>) -> Result<AttentionVector<T>> {
    let v = &context.values;
    v.expect_rank(2, "stripe context")?;
    if v.shape()[0] != params.channels() {
        return Err(Error::Dimension(format!(
            "stripe context has {} channels, parameters have {}",
            v.shape()[0],
            params.channels()
        )));
    }
    let as_map = v.reshape(vec![v.shape()[0], v.shape()[1], 1])?;
    let a = unidim_transform_in(&mut Eager, &as_map, params)?;
    Ok(AttentionVector { axis: context.axis, values: to_matrix(&a)? })
}

/// Applies one SUSA unit to a `[C, H, W]` feature map.
pub fn susa_apply<T: Scalar>(x: &Tensor<T>, params: &SusaParams<T>, config: &SusaConfig) -> Result<Tensor<T>> {
    susa_apply_in(&mut Eager, x, params, config)
}
