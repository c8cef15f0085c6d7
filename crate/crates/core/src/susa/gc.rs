use crate::autograd::{Eager, Ops};
use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::scalar::Scalar;
use crate::tensor::{ConvSpec, Tensor};

/// Global context block: softmax attention pooling over all positions, a
/// bottleneck transform, and additive fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct GcParams<T> {
    /// `[1, C, 1, 1]` context kernel producing one logit per position.
    pub context_kernel: Tensor<T>,
    /// `[C / r, C, 1, 1]`.
    pub down: Tensor<T>,
    pub down_bias: Tensor<T>,
    pub ln_gamma: Tensor<T>,
    pub ln_beta: Tensor<T>,
    /// `[C, C / r, 1, 1]`.
    pub up: Tensor<T>,
    pub up_bias: Tensor<T>,
    pub ln_eps: T,
}

impl<T: Scalar> GcParams<T> {
    pub fn init(channels: usize, reduction: usize, init: &mut Initializer) -> Result<Self> {
        if reduction == 0 || !channels.is_multiple_of(reduction) {
            return Err(Error::Spec(format!("reduction ratio {reduction} must divide {channels} channels")));
        }
        let (c, m) = (channels, channels / reduction);
        Ok(Self {
            context_kernel: init.kaiming(&[1, c, 1, 1])?,
            down: init.kaiming(&[m, c, 1, 1])?,
            down_bias: Tensor::zeros(vec![m])?,
            ln_gamma: Tensor::ones(vec![m])?,
            ln_beta: Tensor::zeros(vec![m])?,
            up: init.kaiming(&[c, m, 1, 1])?,
            up_bias: Tensor::zeros(vec![c])?,
            ln_eps: T::of(super::DEFAULT_LN_EPS),
        })
    }

    pub fn channels(&self) -> usize {
        self.up.shape()[0]
    }

    pub fn bottleneck(&self) -> usize {
        self.down.shape()[0]
    }

    fn validate(&self, x_shape: &[usize]) -> Result<()> {
        let (c, m) = (self.channels(), self.bottleneck());
        if m == 0 || c % m != 0 {
            return Err(Error::Spec(format!("bottleneck width {m} must divide {c} channels")));
        }
        if self.context_kernel.shape() != [1, c, 1, 1]
            || self.down.shape() != [m, c, 1, 1]
            || self.up.shape() != [c, m, 1, 1]
        {
            return Err(Error::Dimension("GC block kernels have inconsistent shapes".into()));
        }
        if x_shape.len() != 3 || x_shape[0] != c {
            return Err(Error::Dimension(format!("GC block with {c} channels got input {x_shape:?}")));
        }
        Ok(())
    }
}

pub fn gc_block_in<T: Scalar, G: Ops<T>>(g: &mut G, x: &G::V, params: &GcParams<T>) -> Result<G::V> {
    let shape = g.shape(x);
    params.validate(&shape)?;
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let m = params.bottleneck();

    let kernel = g.param(&params.context_kernel);
    let logits = g.conv2d(x, &kernel, None, &ConvSpec::pointwise(c, 1))?;
    let flat = g.reshape(&logits, &[1, h * w])?;
    let weights = g.softmax(&flat, 1)?;
    let weights = g.reshape(&weights, &[1, h, w])?;
    let weighted = g.mul(x, &weights)?;
    let rows = g.reduce_sum(&weighted, 2)?;
    let context = g.reduce_sum(&rows, 1)?;

    let down = g.param(&params.down);
    let down_bias = g.param(&params.down_bias);
    let t = g.conv2d(&context, &down, Some(&down_bias), &ConvSpec::pointwise(c, m).with_bias(true))?;
    let gamma = g.param(&params.ln_gamma);
    let beta = g.param(&params.ln_beta);
    let t = g.layer_norm_channels(&t, &gamma, &beta, params.ln_eps)?;
    let t = g.relu(&t);
    let up = g.param(&params.up);
    let up_bias = g.param(&params.up_bias);
    let t = g.conv2d(&t, &up, Some(&up_bias), &ConvSpec::pointwise(m, c).with_bias(true))?;
    g.add(x, &t)
}

/// `x + up(relu(LN(down(context))))` with `context` the softmax-weighted
/// sum of `x` over all positions.
pub fn gc_block<T: Scalar>(x: &Tensor<T>, params: &GcParams<T>) -> Result<Tensor<T>> {
    gc_block_in(&mut Eager, x, params)
}
