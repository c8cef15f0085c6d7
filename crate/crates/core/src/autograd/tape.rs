use std::collections::HashMap;

use super::{Ops, UnaryFn};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    self, axis_blocks, broadcast_reduce, conv2d_grad_input, conv2d_grad_weight, layer_norm_stats, resize_backward,
    shuffle_permutation, Binary, ConvSpec, ResizeMode, Tensor,
};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Elementwise { kind: Binary, a: Var, b: Var },
    ReduceMean { x: Var, axis: usize },
    ReduceSum { x: Var },
    SumAll { x: Var },
    Softmax { x: Var, axis: usize },
    Sigmoid { x: Var },
    Relu { x: Var },
    Unary { x: Var, op: UnaryFn<T> },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor<T>, inv_std: Vec<T> },
    Affine { x: Var, scale: Var, shift: Var },
    Conv { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    Resize { x: Var, mode: ResizeMode },
    Slice { x: Var, start: usize },
    Concat { xs: Vec<Var> },
    Shuffle { x: Var, groups: usize },
    Reshape { x: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recorded computation. Nodes are appended in evaluation order, so the
/// record is topologically sorted by construction.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<(usize, Vec<usize>), Var>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input whose gradient will be reported by
    /// [`Gradients::wrt`].
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.clone(), Op::Leaf)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Propagates gradients from a scalar node back to every node it
    /// depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let out = self.val(loss);
        if out.numel() != 1 {
            return Err(Error::Usage(format!("backward needs a scalar loss, got shape {:?}", out.shape())));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(out.shape().to_vec(), T::one())?);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            for (parent, contrib) in self.node_backward(i, &g)? {
                accumulate(&mut grads[parent.0], contrib)?;
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, params: self.params.clone() })
    }

    fn node_backward(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[i];
        let y = &node.value;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Elementwise { kind, a, b } => {
                let (av, bv) = (self.val(*a), self.val(*b));
                match kind {
                    Binary::Add => vec![(*a, g.clone()), (*b, broadcast_reduce(g, None, bv.shape())?)],
                    Binary::Mul => vec![
                        (*a, tensor::elementwise(Binary::Mul, g, bv)?),
                        (*b, broadcast_reduce(g, Some(av), bv.shape())?),
                    ],
                }
            }
            Op::ReduceMean { x, axis } => {
                let xs = self.val(*x).shape();
                let n = T::of_usize(xs[*axis]);
                vec![(*x, expand(&g.scale(T::one() / n), xs)?)]
            }
            Op::ReduceSum { x, .. } => vec![(*x, expand(g, self.val(*x).shape())?)],
            Op::SumAll { x } => {
                let xs = self.val(*x).shape().to_vec();
                vec![(*x, Tensor::full(xs, g.data()[0])?)]
            }
            Op::Softmax { x, axis } => vec![(*x, softmax_backward(y, g, *axis)?)],
            Op::Sigmoid { x } => vec![(*x, y.zip_map(g, |s, gv| gv * s * (T::one() - s))?)],
            Op::Relu { x } => {
                let xv = self.val(*x);
                vec![(*x, xv.zip_map(g, |v, gv| if v > T::zero() { gv } else { T::zero() })?)]
            }
            Op::Unary { x, op } => {
                let xv = self.val(*x);
                let d = xv.zip_map(y, op.df)?;
                vec![(*x, d.zip_map(g, |a, b| a * b)?)]
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let (dx, dgamma, dbeta) = layer_norm_backward(xhat, inv_std, self.val(*gamma), g);
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::Affine { x, scale, shift } => {
                let xv = self.val(*x);
                let s = self.val(*scale);
                let c = xv.shape()[0];
                let p = xv.numel() / c;
                let (xd, gd, sd) = (xv.data(), g.data(), s.data());
                let mut dx = vec![T::zero(); xv.numel()];
                let mut ds = vec![T::zero(); c];
                let mut db = vec![T::zero(); c];
                for ch in 0..c {
                    for k in ch * p..(ch + 1) * p {
                        dx[k] = gd[k] * sd[ch];
                        ds[ch] += gd[k] * xd[k];
                        db[ch] += gd[k];
                    }
                }
                vec![
                    (*x, Tensor::from_parts(xv.shape().to_vec(), dx)),
                    (*scale, Tensor::from_parts(s.shape().to_vec(), ds)),
                    (*shift, Tensor::from_parts(self.val(*shift).shape().to_vec(), db)),
                ]
            }
            Op::Conv { x, w, b, spec } => {
                let (xv, wv) = (self.val(*x), self.val(*w));
                let mut out =
                    vec![(*x, conv2d_grad_input(xv.shape(), wv, g, spec)?), (*w, conv2d_grad_weight(xv, wv, g, spec)?)];
                if let Some(b) = b {
                    let per = g.numel() / spec.out_channels;
                    let db: Vec<T> = g.data().chunks(per).map(|c| c.iter().copied().sum()).collect();
                    out.push((*b, Tensor::from_parts(self.val(*b).shape().to_vec(), db)));
                }
                out
            }
            Op::Resize { x, mode } => vec![(*x, resize_backward(self.val(*x).shape(), g, *mode))],
            Op::Slice { x, start } => {
                let xv = self.val(*x);
                let p = xv.numel() / xv.shape()[0];
                let mut dx = vec![T::zero(); xv.numel()];
                dx[start * p..start * p + g.numel()].copy_from_slice(g.data());
                vec![(*x, Tensor::from_parts(xv.shape().to_vec(), dx))]
            }
            Op::Concat { xs } => {
                let mut off = 0;
                let mut out = Vec::with_capacity(xs.len());
                for v in xs {
                    let n = self.val(*v).numel();
                    let shape = self.val(*v).shape().to_vec();
                    out.push((*v, Tensor::from_parts(shape, g.data()[off..off + n].to_vec())));
                    off += n;
                }
                out
            }
            Op::Shuffle { x, groups } => {
                let c = y.shape()[0];
                let perm = shuffle_permutation(c, *groups)?;
                let p = y.numel() / c;
                let mut dx = vec![T::zero(); y.numel()];
                for (k, &src) in perm.iter().enumerate() {
                    dx[src * p..(src + 1) * p].copy_from_slice(&g.data()[k * p..(k + 1) * p]);
                }
                vec![(*x, Tensor::from_parts(y.shape().to_vec(), dx))]
            }
            Op::Reshape { x } => vec![(*x, g.reshape(self.val(*x).shape().to_vec())?)],
        })
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, contrib: Tensor<T>) -> Result<()> {
    *slot = Some(match slot.take() {
        None => contrib,
        Some(prev) => prev.zip_map(&contrib, |a, b| a + b)?,
    });
    Ok(())
}

fn expand<T: Scalar>(g: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    tensor::elementwise(Binary::Add, &Tensor::zeros(shape.to_vec())?, g)
}

fn softmax_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, n, inner) = axis_blocks(y.shape(), axis)?;
    let (yd, gd) = (y.data(), g.data());
    let mut dx = vec![T::zero(); y.numel()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let dot: T = (0..n).map(|k| yd[at(k)] * gd[at(k)]).sum();
            for k in 0..n {
                dx[at(k)] = yd[at(k)] * (gd[at(k)] - dot);
            }
        }
    }
    Ok(Tensor::from_parts(y.shape().to_vec(), dx))
}

#[allow(clippy::needless_range_loop)]
fn layer_norm_backward<T: Scalar>(
    xhat: &Tensor<T>,
    inv_std: &[T],
    gamma: &Tensor<T>,
    g: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let c = xhat.shape()[0];
    let p = xhat.numel() / c;
    let (xh, gd, ga) = (xhat.data(), g.data(), gamma.data());
    let cn = T::of_usize(c);
    let mut dx = vec![T::zero(); xhat.numel()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for pos in 0..p {
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for ch in 0..c {
            let k = ch * p + pos;
            let dxh = gd[k] * ga[ch];
            m1 += dxh;
            m2 += dxh * xh[k];
            dgamma[ch] += gd[k] * xh[k];
            dbeta[ch] += gd[k];
        }
        m1 /= cn;
        m2 /= cn;
        for ch in 0..c {
            let k = ch * p + pos;
            dx[k] = inv_std[pos] * (gd[k] * ga[ch] - m1 - xh[k] * m2);
        }
    }
    (
        Tensor::from_parts(xhat.shape().to_vec(), dx),
        Tensor::from_parts(gamma.shape().to_vec(), dgamma),
        Tensor::from_parts(gamma.shape().to_vec(), dbeta),
    )
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: HashMap<(usize, Vec<usize>), Var>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a recorded value, or `None` when the loss does not
    /// depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a parameter introduced through [`Ops::param`].
    pub fn wrt_param(&self, t: &Tensor<T>) -> Option<&Tensor<T>> {
        self.params.get(&(t.storage_id(), t.shape().to_vec())).and_then(|v| self.wrt(*v))
    }
}

impl<T: Scalar> Ops<T> for Tape<T> {
    type V = Var;

    fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.clone(), Op::Leaf)
    }

    fn param(&mut self, t: &Tensor<T>) -> Var {
        let key = (t.storage_id(), t.shape().to_vec());
        if let Some(v) = self.params.get(&key) {
            return *v;
        }
        let v = self.push(t.clone(), Op::Leaf);
        self.params.insert(key, v);
        v
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor<T> {
        self.val(*v)
    }

    fn elementwise(&mut self, kind: Binary, a: &Var, b: &Var) -> Result<Var> {
        let y = tensor::elementwise(kind, self.val(*a), self.val(*b))?;
        Ok(self.push(y, Op::Elementwise { kind, a: *a, b: *b }))
    }

    fn reduce_mean(&mut self, x: &Var, axis: usize) -> Result<Var> {
        let y = tensor::reduce_mean(self.val(*x), axis)?;
        Ok(self.push(y, Op::ReduceMean { x: *x, axis }))
    }

    fn reduce_sum(&mut self, x: &Var, axis: usize) -> Result<Var> {
        let y = tensor::reduce_sum(self.val(*x), axis)?;
        Ok(self.push(y, Op::ReduceSum { x: *x }))
    }

    fn sum_all(&mut self, x: &Var) -> Var {
        let y = Tensor::scalar(self.val(*x).sum());
        self.push(y, Op::SumAll { x: *x })
    }

    fn softmax(&mut self, x: &Var, axis: usize) -> Result<Var> {
        let y = tensor::softmax(self.val(*x), axis)?;
        Ok(self.push(y, Op::Softmax { x: *x, axis }))
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        let y = tensor::sigmoid(self.val(*x));
        self.push(y, Op::Sigmoid { x: *x })
    }

    fn relu(&mut self, x: &Var) -> Var {
        let y = tensor::relu(self.val(*x));
        self.push(y, Op::Relu { x: *x })
    }

    fn unary(&mut self, x: &Var, op: UnaryFn<T>) -> Var {
        let y = self.val(*x).map(op.f);
        self.push(y, Op::Unary { x: *x, op })
    }

    fn layer_norm_channels(&mut self, x: &Var, gamma: &Var, beta: &Var, eps: T) -> Result<Var> {
        let y = tensor::layer_norm_channels(self.val(*x), self.val(*gamma), self.val(*beta), eps)?;
        let stats = layer_norm_stats(self.val(*x), eps);
        let xhat = Tensor::from_parts(y.shape().to_vec(), stats.xhat);
        Ok(self.push(y, Op::LayerNorm { x: *x, gamma: *gamma, beta: *beta, xhat, inv_std: stats.inv_std }))
    }

    fn channel_affine(&mut self, x: &Var, scale: &Var, shift: &Var) -> Result<Var> {
        let y = tensor::channel_affine(self.val(*x), self.val(*scale), self.val(*shift))?;
        Ok(self.push(y, Op::Affine { x: *x, scale: *scale, shift: *shift }))
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: Option<&Var>, spec: &ConvSpec) -> Result<Var> {
        let y = tensor::conv2d(self.val(*x), self.val(*w), b.map(|b| self.val(*b)), spec)?;
        Ok(self.push(y, Op::Conv { x: *x, w: *w, b: b.copied(), spec: *spec }))
    }

    fn resize(&mut self, x: &Var, hw: (usize, usize), mode: ResizeMode) -> Result<Var> {
        let y = tensor::resize(self.val(*x), hw, mode)?;
        Ok(self.push(y, Op::Resize { x: *x, mode }))
    }

    fn slice_channels(&mut self, x: &Var, start: usize, len: usize) -> Result<Var> {
        let y = tensor::slice_channels(self.val(*x), start, len)?;
        Ok(self.push(y, Op::Slice { x: *x, start }))
    }

    fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let vals: Vec<Tensor<T>> = xs.iter().map(|v| self.val(*v).clone()).collect();
        let y = tensor::concat_channels(&vals)?;
        Ok(self.push(y, Op::Concat { xs: xs.to_vec() }))
    }

    fn shuffle_channels(&mut self, x: &Var, groups: usize) -> Result<Var> {
        let y = tensor::shuffle_channels(self.val(*x), groups)?;
        Ok(self.push(y, Op::Shuffle { x: *x, groups }))
    }

    fn reshape(&mut self, x: &Var, shape: &[usize]) -> Result<Var> {
        let y = self.val(*x).reshape(shape.to_vec())?;
        Ok(self.push(y, Op::Reshape { x: *x }))
    }
}
