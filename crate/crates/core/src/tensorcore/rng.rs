//! Seeded sampling.
//!
//! The generator is ChaCha8 seeded with `seed_from_u64(seed)`. Normal samples
//! come from `rand_distr::StandardNormal` in `f64`, drawn in row-major order and
//! rounded to the target precision afterwards, so `f32` and `f64` runs with the
//! same seed see the same underlying values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::tensor::{Scalar, Tensor};

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tensor of independent standard normal entries.
pub fn normal_tensor<T: Scalar, R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(dims, |_| T::from_f64(rng.sample::<f64, _>(StandardNormal)))
}
