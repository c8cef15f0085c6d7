use super::{join, shuffle_block_in, ConvUnit, Parameterized, ShuffleDownParams, ShuffleUnit};
use crate::autograd::{Eager, Ops};
use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::scalar::Scalar;
use crate::tensor::{ConvSpec, Tensor};

/// 3x3 stride-2 conv followed by a stride-2 shuffle unit: total stride 4.
#[derive(Debug, Clone, PartialEq)]
pub struct StemParams<T> {
    pub conv: ConvUnit<T>,
    pub down: ShuffleUnit<T>,
}

impl<T: Scalar> StemParams<T> {
    pub fn init(in_channels: usize, channels: usize, init: &mut Initializer) -> Result<Self> {
        Ok(Self {
            conv: ConvUnit::normed(ConvSpec::standard(in_channels, channels, 3, 2), true, init)?,
            down: ShuffleUnit::Stride2(ShuffleDownParams::init(channels, channels, init)?),
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv.spec.out_channels
    }
}

pub fn stem_in<T: Scalar, G: Ops<T>>(g: &mut G, image: &G::V, params: &StemParams<T>) -> Result<G::V> {
    let shape = g.shape(image);
    if shape.len() != 3 || shape[0] != params.conv.spec.in_channels {
        return Err(Error::Dimension(format!("stem expects [{}, H, W], got {shape:?}", params.conv.spec.in_channels)));
    }
    if shape[1] % 4 != 0 || shape[2] % 4 != 0 {
        return Err(Error::Spec(format!("stem input extents must be divisible by 4, got {}x{}", shape[1], shape[2])));
    }
    let y = params.conv.forward_in(g, image)?;
    shuffle_block_in(g, &y, &params.down)
}

pub fn stem<T: Scalar>(image: &Tensor<T>, params: &StemParams<T>) -> Result<Tensor<T>> {
    stem_in(&mut Eager, image, params)
}

impl<T> Parameterized<T> for StemParams<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.conv.visit(&join(prefix, "conv"), out);
        if let ShuffleUnit::Stride2(d) = &self.down {
            d.visit(&join(prefix, "down"), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.conv.visit_mut(&join(prefix, "conv"), out);
        if let ShuffleUnit::Stride2(d) = &mut self.down {
            d.visit_mut(&join(prefix, "down"), out);
        }
    }
}
