//! X-HRNet: a lightweight high-resolution pose-estimation backbone built
//! from spatially unidimensional self-attention (SUSA).
//!
//! The crate is generic over the real scalar type ([`Scalar`]); the
//! aliases at the root fix the working precision to `f64`, which every
//! test and oracle uses.

// `!(x > 0)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::large_enum_variant)]

pub mod analysis;
pub mod autograd;
pub mod backbone;
pub mod blocks;
pub mod error;
pub mod gradcheck;
pub mod heatmap;
pub mod init;
pub mod scalar;
pub mod susa;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision tensor, the default working type.
pub type Tensor = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape = autograd::Tape<f64>;
pub type Network = backbone::Network<f64>;
pub type Network32 = backbone::Network<f32>;
pub type SusaParams = susa::SusaParams<f64>;
pub type Heatmap = heatmap::Heatmap<f64>;
