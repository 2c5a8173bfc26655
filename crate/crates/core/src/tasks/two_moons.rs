//! Two Moons task: a noisy crescent shifted by the parameters. The shift
//! depends on theta only through |theta1+theta2| and -theta1+theta2, which
//! makes the posterior bimodal.

use ndarray::{array, Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::{FRAC_PI_2, SQRT_2};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sample::SampleMatrix;

pub const R_MEAN: f64 = 0.1;
pub const R_SD: f64 = 0.01;

/// Crescent noise point: v = (r cos a + 0.25, r sin a) with
/// a ~ U(-pi/2, pi/2) and r ~ N(0.1, 0.01^2).
fn crescent(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let alpha = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
    let eps: f64 = StandardNormal.sample(rng);
    let r = R_MEAN + R_SD * eps;
    (r * alpha.cos() + 0.25, r * alpha.sin())
}

/// Deterministic part of the simulator given a crescent point.
pub fn forward(theta: &ArrayView1<f64>, v: (f64, f64)) -> Array1<f64> {
    let shift = (theta[0] + theta[1]).abs() / SQRT_2;
    let rot = (-theta[0] + theta[1]) / SQRT_2;
    array![v.0 - shift, v.1 + rot]
}

pub fn simulate(theta: &ArrayView1<f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let v = crescent(rng);
    forward(theta, v)
}

/// Exact posterior draws by inverting the simulator at `x_obs`.
///
/// Given a crescent draw v, the offsets q1 = v1-x1 and q2 = x2-v2 pin theta
/// up to the sign of theta1+theta2; q1 < 0 has no preimage and is rejected,
/// the sign is chosen uniformly, and draws outside the prior box are
/// rejected.
pub fn reference_sample(
    x_obs: &ArrayView1<f64>,
    lo: f64,
    hi: f64,
    n: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    let mut rng = rng_from_seed(seed);
    let mut out = Array2::zeros((n, 2));
    let budget = 1000usize.saturating_mul(n.max(1));
    let mut attempts = 0usize;
    let mut accepted = 0usize;
    while accepted < n {
        if attempts >= budget {
            return Err(Error::RejectionExhausted { attempts, accepted, requested: n });
        }
        attempts += 1;
        let v = crescent(&mut rng);
        let q1 = v.0 - x_obs[0];
        if q1 < 0.0 {
            continue;
        }
        let q2 = x_obs[1] - v.1;
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let t1 = (s * q1 - q2) / SQRT_2;
        let t2 = (s * q1 + q2) / SQRT_2;
        if t1 >= lo && t1 <= hi && t2 >= lo && t2 <= hi {
            out[[accepted, 0]] = t1;
            out[[accepted, 1]] = t2;
            accepted += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_noise_gives_exact_output() {
        // a = 0, r = 0.1 gives v = (0.35, 0); theta = 0 leaves it unshifted.
        let theta = array![0.0, 0.0];
        let x = forward(&theta.view(), (0.35, 0.0));
        assert_eq!(x[0], 0.35);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn forward_shift_is_symmetric_in_sign() {
        let a = forward(&array![0.3, 0.2].view(), (0.35, 0.0));
        let b = forward(&array![-0.3, -0.2].view(), (0.35, 0.0));
        assert!((a[0] - b[0]).abs() < 1e-15);
        assert!((a[1] + b[1]).abs() < 1e-15);
    }

    #[test]
    fn reference_is_bimodal_and_round_trips() {
        let x_obs = array![0.0, 0.0];
        let sample = reference_sample(&x_obs.view(), -1.0, 1.0, 4_000, 5).unwrap();
        let mut positive = 0usize;
        for row in sample.rows() {
            assert!(row.iter().all(|v| v.abs() <= 1.0));
            // v1 recovered from theta must lie on the crescent's reach.
            let v1 = (row[0] + row[1]).abs() / SQRT_2 + x_obs[0];
            assert!(v1 > 0.2 && v1 < 0.45, "v1 = {v1}");
            if row[0] + row[1] > 0.0 {
                positive += 1;
            }
        }
        let frac = positive as f64 / sample.nrows() as f64;
        assert!((frac - 0.5).abs() < 0.05, "positive branch fraction = {frac}");
    }

    #[test]
    fn simulate_at_truth_lands_near_origin() {
        let theta = array![0.2475, 0.2475];
        let mut rng = rng_from_seed(2);
        for _ in 0..200 {
            let x = simulate(&theta.view(), &mut rng);
            assert!(x[0].abs() < 0.2 && x[1].abs() < 0.2, "x = {x:?}");
        }
    }
}
