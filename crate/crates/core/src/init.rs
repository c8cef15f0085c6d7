//! Seeded parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Deterministic parameter source. The same seed and the same sequence of
/// requests always produce bit-identical tensors.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Kaiming-uniform over the fan-in with `a = sqrt(5)`, i.e. samples in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`. `shape[0]` is the output axis.
    pub fn kaiming<T: Scalar>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
        let bound = 1.0 / (fan_in as f64).sqrt();
        Tensor::rand_uniform(shape.to_vec(), -bound, bound, &mut self.rng)
    }

    pub fn uniform<T: Scalar>(&mut self, shape: &[usize], lo: f64, hi: f64) -> Result<Tensor<T>> {
        Tensor::rand_uniform(shape.to_vec(), lo, hi, &mut self.rng)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
