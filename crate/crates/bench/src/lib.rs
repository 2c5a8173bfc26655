//! Shared helpers for the benchmark binaries.

use ndarray::Array2;
use sbi_core::rng::rng_from_seed;

/// Deterministic standard-normal matrix for benchmark inputs.
pub fn normal_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
}
