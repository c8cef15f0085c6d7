use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Nearest,
    Bilinear,
}

/// Interpolation taps along one axis: for each output index, up to two
/// (source index, weight) pairs.
fn axis_taps(n_in: usize, n_out: usize, mode: ResizeMode) -> Vec<[(usize, f64); 2]> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| match mode {
            ResizeMode::Nearest => {
                let src = ((o * n_in) / n_out).min(n_in - 1);
                [(src, 1.0), (src, 0.0)]
            }
            ResizeMode::Bilinear => {
                // align_corners = false
                let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(n_in - 1);
                let i1 = (i0 + 1).min(n_in - 1);
                let l = src - i0 as f64;
                [(i0, 1.0 - l), (i1, l)]
            }
        })
        .collect()
}

/// Spatial resize of a `[C, H, W]` tensor.
pub fn resize<T: Scalar>(x: &Tensor<T>, out_hw: (usize, usize), mode: ResizeMode) -> Result<Tensor<T>> {
    x.expect_rank(3, "resize")?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (h2, w2) = out_hw;
    if h2 == 0 || w2 == 0 {
        return Err(Error::Dimension("resize target extents must be >= 1".into()));
    }
    if (h2, w2) == (h, w) {
        return Ok(x.clone());
    }
    let rows = axis_taps(h, h2, mode);
    let cols = axis_taps(w, w2, mode);
    let d = x.data();
    let mut out = Vec::with_capacity(c * h2 * w2);
    for ch in 0..c {
        let plane = &d[ch * h * w..(ch + 1) * h * w];
        for r in &rows {
            for q in &cols {
                let mut acc = T::zero();
                for &(i, wi) in r {
                    for &(j, wj) in q {
                        let wt = wi * wj;
                        if wt != 0.0 {
                            acc += T::of(wt) * plane[i * w + j];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, h2, w2], out))
}

/// Adjoint of [`resize`]: scatters an output gradient back onto the input grid.
pub(crate) fn resize_backward<T: Scalar>(in_shape: &[usize], grad_out: &Tensor<T>, mode: ResizeMode) -> Tensor<T> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (h2, w2) = (grad_out.shape()[1], grad_out.shape()[2]);
    if (h2, w2) == (h, w) {
        return grad_out.clone();
    }
    let rows = axis_taps(h, h2, mode);
    let cols = axis_taps(w, w2, mode);
    let g = grad_out.data();
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for (oi, r) in rows.iter().enumerate() {
            for (oj, q) in cols.iter().enumerate() {
                let gv = g[(ch * h2 + oi) * w2 + oj];
                for &(i, wi) in r {
                    for &(j, wj) in q {
                        let wt = wi * wj;
                        if wt != 0.0 {
                            dx[(ch * h + i) * w + j] += T::of(wt) * gv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(in_shape.to_vec(), dx)
}
