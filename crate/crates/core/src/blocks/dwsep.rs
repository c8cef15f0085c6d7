use super::{ConvUnit, Parameterized};
use crate::autograd::{Eager, Ops};
use crate::error::Result;
use crate::init::Initializer;
use crate::scalar::Scalar;
use crate::tensor::{ConvSpec, Tensor};

/// Depthwise 3x3 (padding 1) followed by a pointwise 1x1, each with an
/// affine norm and no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DwSepParams<T> {
    pub dw: ConvUnit<T>,
    pub pw: ConvUnit<T>,
}

impl<T: Scalar> DwSepParams<T> {
    pub fn init(in_channels: usize, out_channels: usize, stride: usize, init: &mut Initializer) -> Result<Self> {
        Ok(Self {
            dw: ConvUnit::normed(ConvSpec::depthwise3x3(in_channels, stride), false, init)?,
            pw: ConvUnit::normed(ConvSpec::pointwise(in_channels, out_channels), false, init)?,
        })
    }

    /// Delta depthwise kernels and an identity pointwise matrix.
    pub fn identity(channels: usize) -> Result<Self> {
        let mut p = Self::init(channels, channels, 1, &mut Initializer::new(0))?;
        p.dw.weight = Tensor::from_fn(p.dw.spec.weight_shape().to_vec(), |i| {
            if i[2] == 1 && i[3] == 1 {
                T::one()
            } else {
                T::zero()
            }
        })?;
        p.pw.weight =
            Tensor::from_fn(p.pw.spec.weight_shape().to_vec(), |i| if i[0] == i[1] { T::one() } else { T::zero() })?;
        Ok(p)
    }

    pub fn in_channels(&self) -> usize {
        self.dw.spec.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.pw.spec.out_channels
    }

    pub fn stride(&self) -> usize {
        self.dw.spec.stride.0
    }

    pub fn param_count(&self) -> usize {
        self.dw.param_count() + self.pw.param_count()
    }
}

impl<T> Parameterized<T> for DwSepParams<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.dw.visit(&super::join(prefix, "dw"), out);
        self.pw.visit(&super::join(prefix, "pw"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.dw.visit_mut(&super::join(prefix, "dw"), out);
        self.pw.visit_mut(&super::join(prefix, "pw"), out);
    }
}

pub fn dw_sep_conv_in<T: Scalar, G: Ops<T>>(g: &mut G, x: &G::V, params: &DwSepParams<T>) -> Result<G::V> {
    let y = params.dw.forward_in(g, x)?;
    params.pw.forward_in(g, &y)
}

pub fn dw_sep_conv<T: Scalar>(x: &Tensor<T>, params: &DwSepParams<T>) -> Result<Tensor<T>> {
    dw_sep_conv_in(&mut Eager, x, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_configuration() {
        let x: Tensor<f64> = Initializer::new(4).uniform(&[5, 6, 7], -1.0, 1.0).unwrap();
        assert_eq!(dw_sep_conv(&x, &DwSepParams::identity(5).unwrap()).unwrap(), x);
    }

    #[test]
    fn stride_two_halves() {
        let p: DwSepParams<f64> = DwSepParams::init(3, 6, 2, &mut Initializer::new(1)).unwrap();
        let x = Tensor::ones(vec![3, 8, 8]).unwrap();
        assert_eq!(dw_sep_conv(&x, &p).unwrap().shape(), &[6, 4, 4]);
    }
}
