//! Reverse-mode differentiation over the tensor primitives, plus a
//! central-difference oracle for checking it.
//!
//! Model code is written once against [`Ops`]. [`Eager`] evaluates it
//! directly; [`Tape`] records every primitive so [`Tape::backward`] can
//! propagate gradients from a scalar loss.

mod check;
mod tape;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{self, Binary, ConvSpec, ResizeMode, Tensor};

pub use check::{compare_gradients, finite_diff, grad_check, grad_check_with, GradCheckReport, ScalarFn};
pub use tape::{Gradients, Tape, Var};

/// Elementwise unary function with a caller-supplied derivative
/// `d(x, y) = dy/dx` evaluated at input `x` and output `y`.
#[derive(Clone, Copy)]
pub struct UnaryFn<T> {
    pub name: &'static str,
    pub f: fn(T) -> T,
    pub df: fn(T, T) -> T,
}

/// The primitive vocabulary shared by eager evaluation and the tape.
pub trait Ops<T: Scalar> {
    type V: Clone;

    /// Introduces a value that gradients are not requested for.
    fn constant(&mut self, t: &Tensor<T>) -> Self::V;
    /// Introduces a parameter; the tape keys its gradient by the tensor's
    /// storage so [`Gradients::wrt_param`] can find it again.
    fn param(&mut self, t: &Tensor<T>) -> Self::V;
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Tensor<T>;

    fn elementwise(&mut self, kind: Binary, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn reduce_mean(&mut self, x: &Self::V, axis: usize) -> Result<Self::V>;
    fn reduce_sum(&mut self, x: &Self::V, axis: usize) -> Result<Self::V>;
    fn sum_all(&mut self, x: &Self::V) -> Self::V;
    fn softmax(&mut self, x: &Self::V, axis: usize) -> Result<Self::V>;
    fn sigmoid(&mut self, x: &Self::V) -> Self::V;
    fn relu(&mut self, x: &Self::V) -> Self::V;
    fn unary(&mut self, x: &Self::V, op: UnaryFn<T>) -> Self::V;
    fn layer_norm_channels(&mut self, x: &Self::V, gamma: &Self::V, beta: &Self::V, eps: T) -> Result<Self::V>;
    fn channel_affine(&mut self, x: &Self::V, scale: &Self::V, shift: &Self::V) -> Result<Self::V>;
    fn conv2d(&mut self, x: &Self::V, w: &Self::V, b: Option<&Self::V>, spec: &ConvSpec) -> Result<Self::V>;
    fn resize(&mut self, x: &Self::V, hw: (usize, usize), mode: ResizeMode) -> Result<Self::V>;
    fn slice_channels(&mut self, x: &Self::V, start: usize, len: usize) -> Result<Self::V>;
    fn concat_channels(&mut self, xs: &[Self::V]) -> Result<Self::V>;
    fn shuffle_channels(&mut self, x: &Self::V, groups: usize) -> Result<Self::V>;
    fn reshape(&mut self, x: &Self::V, shape: &[usize]) -> Result<Self::V>;

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        self.elementwise(Binary::Add, a, b)
    }

    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        self.elementwise(Binary::Mul, a, b)
    }

    fn shape(&self, v: &Self::V) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }
}

/// Direct evaluation; values are the tensors themselves.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl<T: Scalar> Ops<T> for Eager {
    type V = Tensor<T>;

    fn constant(&mut self, t: &Tensor<T>) -> Tensor<T> {
        t.clone()
    }

    fn param(&mut self, t: &Tensor<T>) -> Tensor<T> {
        t.clone()
    }

    fn value<'a>(&'a self, v: &'a Tensor<T>) -> &'a Tensor<T> {
        v
    }

    fn elementwise(&mut self, kind: Binary, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::elementwise(kind, a, b)
    }

    fn reduce_mean(&mut self, x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
        tensor::reduce_mean(x, axis)
    }

    fn reduce_sum(&mut self, x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
        tensor::reduce_sum(x, axis)
    }

    fn sum_all(&mut self, x: &Tensor<T>) -> Tensor<T> {
        Tensor::scalar(x.sum())
    }

    fn softmax(&mut self, x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
        tensor::softmax(x, axis)
    }

    fn sigmoid(&mut self, x: &Tensor<T>) -> Tensor<T> {
        tensor::sigmoid(x)
    }

    fn relu(&mut self, x: &Tensor<T>) -> Tensor<T> {
        tensor::relu(x)
    }

    fn unary(&mut self, x: &Tensor<T>, op: UnaryFn<T>) -> Tensor<T> {
        x.map(op.f)
    }

    fn layer_norm_channels(&mut self, x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        tensor::layer_norm_channels(x, gamma, beta, eps)
    }

    fn channel_affine(&mut self, x: &Tensor<T>, scale: &Tensor<T>, shift: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::channel_affine(x, scale, shift)
    }

    fn conv2d(&mut self, x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, spec: &ConvSpec) -> Result<Tensor<T>> {
        tensor::conv2d(x, w, b, spec)
    }

    fn resize(&mut self, x: &Tensor<T>, hw: (usize, usize), mode: ResizeMode) -> Result<Tensor<T>> {
        tensor::resize(x, hw, mode)
    }

    fn slice_channels(&mut self, x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
        tensor::slice_channels(x, start, len)
    }

    fn concat_channels(&mut self, xs: &[Tensor<T>]) -> Result<Tensor<T>> {
        tensor::concat_channels(xs)
    }

    fn shuffle_channels(&mut self, x: &Tensor<T>, groups: usize) -> Result<Tensor<T>> {
        tensor::shuffle_channels(x, groups)
    }

    fn reshape(&mut self, x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
        x.reshape(shape.to_vec())
    }
}
