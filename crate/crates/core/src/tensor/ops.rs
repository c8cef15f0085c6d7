use super::{axis_blocks, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Binary elementwise operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Mul,
}

/// Per-axis strides of `b` when broadcast against `a`; broadcast axes get
/// stride zero.
fn broadcast_strides(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let ok = a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| x == y || y == 1);
    if !ok {
        return Err(Error::Dimension(format!("cannot broadcast {b:?} onto {a:?} (only singleton axes broadcast)")));
    }
    let mut strides = vec![0; b.len()];
    let mut s = 1;
    for ax in (0..b.len()).rev() {
        strides[ax] = if b[ax] == 1 && a[ax] != 1 { 0 } else { s };
        s *= b[ax];
    }
    Ok(strides)
}

/// Calls `f(linear index into a, linear index into b)` for every element of
/// `a` in row-major order.
fn for_each_broadcast(a: &[usize], b_strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let n: usize = a.iter().product();
    let rank = a.len();
    let mut idx = vec![0usize; rank];
    let mut ib = 0usize;
    for ia in 0..n {
        f(ia, ib);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            ib += b_strides[ax];
            if idx[ax] < a[ax] {
                break;
            }
            ib -= b_strides[ax] * a[ax];
            idx[ax] = 0;
        }
    }
}

/// `a op b`, where `b` either matches `a` or has some extents set to 1.
pub fn elementwise<T: Scalar>(kind: Binary, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        return a.zip_map(b, |x, y| match kind {
            Binary::Add => x + y,
            Binary::Mul => x * y,
        });
    }
    let strides = broadcast_strides(a.shape(), b.shape())?;
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); a.numel()];
    for_each_broadcast(a.shape(), &strides, |ia, ib| {
        out[ia] = match kind {
            Binary::Add => ad[ia] + bd[ib],
            Binary::Mul => ad[ia] * bd[ib],
        };
    });
    Ok(Tensor::from_parts(a.shape().to_vec(), out))
}

/// Sums a gradient of `a`'s shape down to the (broadcast) shape of `b`,
/// optionally weighting each term by `weight` (same shape as `a`).
pub(crate) fn broadcast_reduce<T: Scalar>(
    grad: &Tensor<T>,
    weight: Option<&Tensor<T>>,
    b_shape: &[usize],
) -> Result<Tensor<T>> {
    let strides = broadcast_strides(grad.shape(), b_shape)?;
    let n: usize = b_shape.iter().product();
    let mut out = vec![T::zero(); n];
    let g = grad.data();
    match weight {
        Some(w) => {
            let w = w.data();
            for_each_broadcast(grad.shape(), &strides, |ia, ib| out[ib] += g[ia] * w[ia]);
        }
        None => for_each_broadcast(grad.shape(), &strides, |ia, ib| out[ib] += g[ia]),
    }
    Ok(Tensor::from_parts(b_shape.to_vec(), out))
}

fn reduce_with<T: Scalar>(x: &Tensor<T>, axis: usize, scale: T) -> Result<Tensor<T>> {
    let (outer, n, inner) = axis_blocks(x.shape(), axis)?;
    let d = x.data();
    let mut out = vec![T::zero(); outer * inner];
    for o in 0..outer {
        for k in 0..n {
            let row = &d[(o * n + k) * inner..(o * n + k + 1) * inner];
            for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = 1;
    Ok(Tensor::from_parts(shape, out.into_iter().map(|v| v * scale).collect()))
}

/// Arithmetic mean along `axis`; the reduced extent is kept as 1.
pub fn reduce_mean<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (_, n, _) = axis_blocks(x.shape(), axis)?;
    reduce_with(x, axis, T::one() / T::of_usize(n))
}

/// Sum along `axis`; the reduced extent is kept as 1.
pub fn reduce_sum<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    reduce_with(x, axis, T::one())
}

/// Softmax along `axis` with max subtraction.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, n, inner) = axis_blocks(x.shape(), axis)?;
    let d = x.data();
    let mut out = vec![T::zero(); x.numel()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let mut m = T::neg_infinity();
            for k in 0..n {
                m = m.max(d[at(k)]);
            }
            let mut z = T::zero();
            for k in 0..n {
                let e = (d[at(k)] - m).exp();
                out[at(k)] = e;
                z += e;
            }
            for k in 0..n {
                out[at(k)] /= z;
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

#[inline]
pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

fn check_channel_vec<T: Scalar>(x: &Tensor<T>, v: &Tensor<T>, what: &str) -> Result<usize> {
    let c = x.shape()[0];
    if v.numel() != c {
        return Err(Error::Dimension(format!("{what} has {} entries, input has {c} channels", v.numel())));
    }
    Ok(c)
}

/// Per-channel `scale * x + shift` over a `[C, ...]` tensor.
pub fn channel_affine<T: Scalar>(x: &Tensor<T>, scale: &Tensor<T>, shift: &Tensor<T>) -> Result<Tensor<T>> {
    let c = check_channel_vec(x, scale, "scale")?;
    check_channel_vec(x, shift, "shift")?;
    let p = x.numel() / c;
    let (s, b) = (scale.data(), shift.data());
    let out =
        x.data().chunks(p).enumerate().flat_map(|(ch, row)| row.iter().map(move |&v| s[ch] * v + b[ch])).collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Normalized values and inverse standard deviations of a channel
/// LayerNorm, saved for the backward pass.
pub(crate) struct LayerNormStats<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) fn layer_norm_stats<T: Scalar>(x: &Tensor<T>, eps: T) -> LayerNormStats<T> {
    let c = x.shape()[0];
    let p = x.numel() / c;
    let d = x.data();
    let cn = T::of_usize(c);
    let mut xhat = vec![T::zero(); x.numel()];
    let mut inv_std = vec![T::zero(); p];
    for pos in 0..p {
        let mean = (0..c).map(|ch| d[ch * p + pos]).sum::<T>() / cn;
        let var = (0..c)
            .map(|ch| {
                let dv = d[ch * p + pos] - mean;
                dv * dv
            })
            .sum::<T>()
            / cn;
        let is = T::one() / (var + eps).sqrt();
        inv_std[pos] = is;
        for ch in 0..c {
            xhat[ch * p + pos] = (d[ch * p + pos] - mean) * is;
        }
    }
    LayerNormStats { xhat, inv_std }
}

/// LayerNorm across the leading (channel) axis at every other position,
/// followed by a per-channel scale and shift.
pub fn layer_norm_channels<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    check_channel_vec(x, gamma, "gamma")?;
    check_channel_vec(x, beta, "beta")?;
    if !(eps > T::zero()) {
        return Err(Error::Spec("layer norm eps must be positive".into()));
    }
    let stats = layer_norm_stats(x, eps);
    let xhat = Tensor::from_parts(x.shape().to_vec(), stats.xhat);
    channel_affine(&xhat, gamma, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn mul_and_add_identity() {
        let m = elementwise(Binary::Mul, &t(&[2], &[1., 2.]), &t(&[2], &[3., 4.])).unwrap();
        assert_eq!(m.data(), &[3., 8.]);
        let x = t(&[2, 2], &[1., -2., 3., 4.]);
        assert_eq!(elementwise(Binary::Add, &x, &x.zeros_like()).unwrap(), x);
    }

    #[test]
    fn broadcast_rejects_non_singleton() {
        let a = Tensor::<f64>::zeros(vec![2, 3]).unwrap();
        let b = Tensor::<f64>::zeros(vec![2, 2]).unwrap();
        assert!(matches!(elementwise(Binary::Add, &a, &b), Err(Error::Dimension(_))));
        let b = Tensor::<f64>::zeros(vec![3]).unwrap();
        assert!(elementwise(Binary::Add, &a, &b).is_err());
    }

    #[test]
    fn mean_basics() {
        assert_eq!(reduce_mean(&t(&[3], &[1., 2., 3.]), 0).unwrap().data(), &[2.]);
        let ones = Tensor::<f64>::ones(vec![2, 3, 4]).unwrap();
        for ax in 0..3 {
            assert!(reduce_mean(&ones, ax).unwrap().data().iter().all(|&v| v == 1.0));
        }
        assert!(matches!(reduce_mean(&ones, 3), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_basics() {
        let s = softmax(&t(&[2], &[0., 0.]), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::rand_uniform(vec![3, 5], -4.0, 4.0, &mut rng).unwrap();
        let shifted = x.map(|v| v + 123.0);
        let d = softmax(&x, 1).unwrap().max_abs_diff(&softmax(&shifted, 1).unwrap()).unwrap();
        assert!(d < 1e-12);
    }

    #[test]
    fn softmax_large_inputs_stay_finite() {
        let s = softmax(&t(&[3], &[1000., 999., -1000.]), 0).unwrap();
        assert!(s.all_finite());
        assert!((s.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(&t(&[1], &[0.])).data(), &[0.5]);
        let x = t(&[4], &[-3., -0.5, 0.7, 2.]);
        let s = sigmoid(&x);
        let sn = sigmoid(&x.scale(-1.0));
        for (a, b) in s.data().iter().zip(sn.data()) {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
        let sat = sigmoid(&t(&[2], &[30., -30.]));
        assert!((sat.data()[0] - 1.0).abs() < 1e-9);
        assert!(sat.data()[1].abs() < 1e-9);
        let far = sigmoid(&t(&[2], &[800., -800.]));
        assert!(far.all_finite());
    }

    #[test]
    fn layer_norm_constant_collapses_to_beta() {
        let x = t(&[3, 2], &[5., -1., 5., -1., 5., -1.]);
        let g = Tensor::ones(vec![3]).unwrap();
        let b = Tensor::zeros(vec![3]).unwrap();
        let y = layer_norm_channels(&x, &g, &b, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::<f64>::rand_uniform(vec![8, 5], -2.0, 3.0, &mut rng).unwrap();
        let g = Tensor::ones(vec![8]).unwrap();
        let b = Tensor::zeros(vec![8]).unwrap();
        let y = layer_norm_channels(&x, &g, &b, 1e-8).unwrap();
        for pos in 0..5 {
            let col: Vec<f64> = (0..8).map(|c| y.at(&[c, pos])).collect();
            let mean = col.iter().sum::<f64>() / 8.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn layer_norm_length_mismatch() {
        let x = Tensor::<f64>::ones(vec![3, 2]).unwrap();
        let g = Tensor::ones(vec![2]).unwrap();
        let b = Tensor::zeros(vec![3]).unwrap();
        assert!(matches!(layer_norm_channels(&x, &g, &b, 1e-5), Err(Error::Dimension(_))));
    }
}
