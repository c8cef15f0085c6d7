use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometry of a 2D convolution over a `[C, H, W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Dense `k x k` convolution with "same"-style padding `k / 2`.
    pub fn standard(in_channels: usize, out_channels: usize, k: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (k, k),
            stride: (stride, stride),
            padding: (k / 2, k / 2),
            groups: 1,
            has_bias: false,
        }
    }

    /// 1x1 convolution.
    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::standard(in_channels, out_channels, 1, 1)
    }

    /// Depthwise 3x3 convolution (one filter per channel), padding 1.
    pub fn depthwise3x3(channels: usize, stride: usize) -> Self {
        Self { groups: channels, ..Self::standard(channels, channels, 3, stride) }
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Spec("convolution channel counts must be positive".into()));
        }
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(Error::Spec("kernel and stride extents must be >= 1".into()));
        }
        if self.groups == 0
            || !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return Err(Error::Spec(format!(
                "groups {} must divide in_channels {} and out_channels {}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels / self.groups, self.kernel.0, self.kernel.1]
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + if self.has_bias { self.out_channels } else { 0 }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.padding;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::Dimension(format!("input {h}x{w} smaller than kernel {kh}x{kw} after padding")));
        }
        Ok(((h + 2 * ph - kh) / self.stride.0 + 1, (w + 2 * pw - kw) / self.stride.1 + 1))
    }

    /// Multiply-accumulates for one application at the given input size.
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let (oh, ow) = self.output_hw(h, w)?;
        let per_out = (self.in_channels / self.groups) * self.kernel.0 * self.kernel.1;
        let bias = usize::from(self.has_bias);
        Ok((self.out_channels * oh * ow * (per_out + bias)) as u64)
    }
}

struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    oh: usize,
    ow: usize,
    cin_g: usize,
    cout_g: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
}

impl Geometry {
    fn new<T: Scalar>(x_shape: &[usize], weights: &Tensor<T>, spec: &ConvSpec) -> Result<Self> {
        spec.validate()?;
        if x_shape.len() != 3 {
            return Err(Error::Dimension(format!("conv2d expects [C, H, W] input, got {x_shape:?}")));
        }
        let (cin, h, w) = (x_shape[0], x_shape[1], x_shape[2]);
        if cin != spec.in_channels {
            return Err(Error::Dimension(format!(
                "conv2d input has {cin} channels, spec expects {}",
                spec.in_channels
            )));
        }
        if weights.shape() != spec.weight_shape() {
            return Err(Error::Dimension(format!(
                "conv2d weights {:?}, spec expects {:?}",
                weights.shape(),
                spec.weight_shape()
            )));
        }
        let (oh, ow) = spec.output_hw(h, w)?;
        Ok(Self {
            cin,
            h,
            w,
            cout: spec.out_channels,
            oh,
            ow,
            cin_g: cin / spec.groups,
            cout_g: spec.out_channels / spec.groups,
            kh: spec.kernel.0,
            kw: spec.kernel.1,
            sh: spec.stride.0,
            sw: spec.stride.1,
            ph: spec.padding.0,
            pw: spec.padding.1,
        })
    }

    /// Calls `f(input offset, output offset)` for every in-bounds tap of
    /// filter `(co, ci_local, ki, kj)`.
    #[inline]
    fn taps(&self, co: usize, ci_local: usize, ki: usize, kj: usize, mut f: impl FnMut(usize, usize)) {
        let ci = (co / self.cout_g) * self.cin_g + ci_local;
        for oi in 0..self.oh {
            let ii = (oi * self.sh + ki) as isize - self.ph as isize;
            if ii < 0 || ii >= self.h as isize {
                continue;
            }
            let in_row = (ci * self.h + ii as usize) * self.w;
            let out_row = (co * self.oh + oi) * self.ow;
            for oj in 0..self.ow {
                let jj = (oj * self.sw + kj) as isize - self.pw as isize;
                if jj < 0 || jj >= self.w as isize {
                    continue;
                }
                f(in_row + jj as usize, out_row + oj);
            }
        }
    }

    fn weight_index(&self, co: usize, ci_local: usize, ki: usize, kj: usize) -> usize {
        ((co * self.cin_g + ci_local) * self.kh + ki) * self.kw + kj
    }
}

/// Cross-correlation with zero padding, grouped over channels.
///
/// `x` is `[C_in, H, W]`, `weights` is `[C_out, C_in / groups, kh, kw]`.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let g = Geometry::new(x.shape(), weights, spec)?;
    let mut out = vec![T::zero(); g.cout * g.oh * g.ow];
    if let Some(b) = bias {
        if b.numel() != g.cout {
            return Err(Error::Dimension(format!("conv2d bias has {} entries, expected {}", b.numel(), g.cout)));
        }
        for (co, chunk) in out.chunks_mut(g.oh * g.ow).enumerate() {
            chunk.fill(b.data()[co]);
        }
    }
    let (xd, wd) = (x.data(), weights.data());
    for co in 0..g.cout {
        for cl in 0..g.cin_g {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let wv = wd[g.weight_index(co, cl, ki, kj)];
                    if wv == T::zero() {
                        continue;
                    }
                    g.taps(co, cl, ki, kj, |i, o| out[o] += wv * xd[i]);
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.cout, g.oh, g.ow], out))
}

/// Gradient of a convolution with respect to its input.
pub(crate) fn conv2d_grad_input<T: Scalar>(
    x_shape: &[usize],
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let g = Geometry::new(x_shape, weights, spec)?;
    let mut dx = vec![T::zero(); g.cin * g.h * g.w];
    let (wd, gd) = (weights.data(), grad_out.data());
    for co in 0..g.cout {
        for cl in 0..g.cin_g {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let wv = wd[g.weight_index(co, cl, ki, kj)];
                    g.taps(co, cl, ki, kj, |i, o| dx[i] += wv * gd[o]);
                }
            }
        }
    }
    Ok(Tensor::from_parts(x_shape.to_vec(), dx))
}

/// Gradient of a convolution with respect to its weights.
pub(crate) fn conv2d_grad_weight<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let g = Geometry::new(x.shape(), weights, spec)?;
    let mut dw = vec![T::zero(); weights.numel()];
    let (xd, gd) = (x.data(), grad_out.data());
    for co in 0..g.cout {
        for cl in 0..g.cin_g {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let mut acc = T::zero();
                    g.taps(co, cl, ki, kj, |i, o| acc += xd[i] * gd[o]);
                    dw[g.weight_index(co, cl, ki, kj)] = acc;
                }
            }
        }
    }
    Ok(Tensor::from_parts(weights.shape().to_vec(), dw))
}
