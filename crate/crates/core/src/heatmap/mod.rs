//! Single-peak heatmaps and their 1D projections.
//!
//! A separable (rank-1) heatmap is exactly the outer product of its two
//! normalised marginals, which is the observation SUSA exploits: a `K x H x W`
//! target can be carried by `K` pairs of heat vectors.

mod decode;
mod io;
mod toy;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use decode::{decode, flip_average, Keypoint, COCO_FLIP_PAIRS};
pub use io::{read_csv_grid, read_csv_slice, write_csv_heatmap, write_csv_slice};
pub use toy::{fusion_toy, FusionToy};

/// `K x H x W` stack of per-joint confidence maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T> {
    values: Tensor<T>,
}

impl<T: Scalar> Heatmap<T> {
    pub fn new(values: Tensor<T>) -> Result<Self> {
        values.expect_rank(3, "heatmap")?;
        Ok(Self { values })
    }

    pub fn from_slices(slices: &[Tensor<T>]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::Dimension("heatmap needs at least one joint".into()))?;
        first.expect_rank(2, "heatmap slice")?;
        let (h, w) = (first.shape()[0], first.shape()[1]);
        let mut data = Vec::with_capacity(slices.len() * h * w);
        for s in slices {
            if s.shape() != [h, w] {
                return Err(Error::Dimension(format!("heatmap slices must all be {h}x{w}, got {:?}", s.shape())));
            }
            data.extend_from_slice(s.data());
        }
        Self::new(Tensor::new(vec![slices.len(), h, w], data)?)
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }

    pub fn joints(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn hw(&self) -> (usize, usize) {
        (self.values.shape()[1], self.values.shape()[2])
    }

    /// Joint `k` as an `H x W` tensor.
    pub fn slice(&self, k: usize) -> Result<Tensor<T>> {
        let (h, w) = self.hw();
        if k >= self.joints() {
            return Err(Error::Dimension(format!("joint {k} out of range for {} joints", self.joints())));
        }
        Tensor::new(vec![h, w], self.values.data()[k * h * w..(k + 1) * h * w].to_vec())
    }
}

/// A Gaussian target and whether its centre lies so far outside the grid
/// that the slice is effectively empty.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTarget<T> {
    pub slice: Tensor<T>,
    pub empty: bool,
}

/// `exp(-((j - x)^2 + (i - y)^2) / (2 sigma^2))` on an `H x W` grid, where
/// `center = (x, y)` is in column/row pixel units.
pub fn gaussian_heatmap<T: Scalar>(center: (f64, f64), sigma: f64, hw: (usize, usize)) -> Result<GaussianTarget<T>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Spec(format!("sigma must be positive and finite, got {sigma}")));
    }
    let (x, y) = center;
    let denom = 2.0 * sigma * sigma;
    let slice = Tensor::from_fn(vec![hw.0, hw.1], |ij| {
        let (dy, dx) = (ij[0] as f64 - y, ij[1] as f64 - x);
        T::of((-(dx * dx + dy * dy) / denom).exp())
    })?;
    let empty = slice.max_value().to_f64_lossy() < (-4.5f64).exp();
    Ok(GaussianTarget { slice, empty })
}

/// The two normalised marginals of a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatVectorPair<T> {
    /// Row marginal, length H.
    pub h_vec: Vec<T>,
    /// Column marginal, length W.
    pub w_vec: Vec<T>,
}

pub fn project<T: Scalar>(slice: &Tensor<T>) -> Result<HeatVectorPair<T>> {
    slice.expect_rank(2, "heatmap slice")?;
    let (h, w) = (slice.shape()[0], slice.shape()[1]);
    let total = slice.sum();
    if !(total > T::zero()) {
        return Err(Error::Degenerate("cannot project a slice with non-positive total mass".into()));
    }
    let mut h_vec = vec![T::zero(); h];
    let mut w_vec = vec![T::zero(); w];
    for (idx, &v) in slice.data().iter().enumerate() {
        h_vec[idx / w] += v;
        w_vec[idx % w] += v;
    }
    for v in h_vec.iter_mut().chain(w_vec.iter_mut()) {
        *v /= total;
    }
    Ok(HeatVectorPair { h_vec, w_vec })
}

/// Outer product of the pair, rescaled to peak 1.
pub fn reconstruct<T: Scalar>(pair: &HeatVectorPair<T>) -> Result<Tensor<T>> {
    let (h, w) = (pair.h_vec.len(), pair.w_vec.len());
    if h == 0 || w == 0 {
        return Err(Error::Degenerate("empty heat vector".into()));
    }
    let outer = Tensor::from_fn(vec![h, w], |ij| pair.h_vec[ij[0]] * pair.w_vec[ij[1]])?;
    let peak = outer.max_value();
    if !(peak > T::zero()) {
        return Err(Error::Degenerate("heat vectors have no positive outer product".into()));
    }
    Ok(outer.scale(T::one() / peak))
}

/// Max abs difference between the peak-normalised slice and its
/// reconstruction from the projected pair. Zero exactly for rank-1 slices.
pub fn reconstruction_error<T: Scalar>(slice: &Tensor<T>) -> Result<T> {
    let rebuilt = reconstruct(&project(slice)?)?;
    let peak = slice.max_value();
    slice.scale(T::one() / peak).max_abs_diff(&rebuilt)
}
