//! 1D Gaussian mixture task: the observation is theta plus noise drawn
//! from a narrow or a wide Gaussian with equal probability.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sample::SampleMatrix;

pub const NARROW_SD: f64 = 0.1;
pub const WIDE_SD: f64 = 1.0;

pub fn simulate(theta: f64, rng: &mut ChaCha8Rng) -> f64 {
    let sd = if rng.random::<bool>() { NARROW_SD } else { WIDE_SD };
    let eps: f64 = StandardNormal.sample(rng);
    theta + sd * eps
}

/// Exact posterior draws at `x_obs` under the flat prior on `[lo, hi]`.
///
/// The noise is symmetric in (theta, x), so a posterior draw is a simulator
/// draw centred at `x_obs`, kept only if it lands inside the prior box.
pub fn reference_sample(
    x_obs: f64,
    lo: f64,
    hi: f64,
    n: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    let mut rng = rng_from_seed(seed);
    let mut out = Array2::zeros((n, 1));
    let budget = 1000usize.saturating_mul(n.max(1));
    let mut attempts = 0usize;
    let mut accepted = 0usize;
    while accepted < n {
        if attempts >= budget {
            return Err(Error::RejectionExhausted { attempts, accepted, requested: n });
        }
        attempts += 1;
        let draw = simulate(x_obs, &mut rng);
        if draw >= lo && draw <= hi {
            out[[accepted, 0]] = draw;
            accepted += 1;
        }
    }
    Ok(out)
}
