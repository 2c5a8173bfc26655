//! Sisson's 2^D Gaussian mixture task (D = 3): each coordinate's sign is
//! flipped independently, so the likelihood is a mixture over the eight
//! sign patterns and the posterior has the same form with theta and x
//! swapped.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sample::{cholesky, SampleMatrix};

pub const OMEGA: f64 = 0.7;
pub const DIM: usize = 3;

/// Cholesky factor of the fixed covariance (unit diagonal, 0.7 off).
pub fn sigma_chol() -> Array2<f64> {
    let mut sigma = Array2::from_elem((DIM, DIM), 0.7);
    for j in 0..DIM {
        sigma[[j, j]] = 1.0;
    }
    cholesky(&sigma.view()).expect("fixed covariance is SPD")
}

fn correlated_noise(chol: &ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let z: Array1<f64> = (0..DIM).map(|_| StandardNormal.sample(rng)).collect();
    chol.dot(&z)
}

/// x = D_s theta + L eps, with each sign +1 with probability OMEGA.
pub fn simulate(
    theta: &ArrayView1<f64>,
    chol: &ArrayView2<f64>,
    rng: &mut ChaCha8Rng,
) -> Array1<f64> {
    let signs: Vec<f64> = (0..DIM)
        .map(|_| if rng.random::<f64>() < OMEGA { 1.0 } else { -1.0 })
        .collect();
    let noise = correlated_noise(chol, rng);
    Array1::from_iter((0..DIM).map(|i| signs[i] * theta[i] + noise[i]))
}

/// Posterior draws at `x_obs`: pick a sign pattern (each +1 with
/// probability OMEGA), then theta = D_s x_obs + D_s L eps, rejected to the
/// prior box.
pub fn reference_sample(
    x_obs: &ArrayView1<f64>,
    lo: f64,
    hi: f64,
    n: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    let chol = sigma_chol();
    let mut rng = rng_from_seed(seed);
    let mut out = Array2::zeros((n, DIM));
    let budget = 1000usize.saturating_mul(n.max(1));
    let mut attempts = 0usize;
    let mut accepted = 0usize;
    'outer: while accepted < n {
        if attempts >= budget {
            return Err(Error::RejectionExhausted { attempts, accepted, requested: n });
        }
        attempts += 1;
        let signs: Vec<f64> = (0..DIM)
            .map(|_| if rng.random::<f64>() < OMEGA { 1.0 } else { -1.0 })
            .collect();
        let noise = correlated_noise(&chol.view(), &mut rng);
        let mut row = [0.0; DIM];
        for i in 0..DIM {
            row[i] = signs[i] * (x_obs[i] + noise[i]);
            if row[i] < lo || row[i] > hi {
                continue 'outer;
            }
        }
        for i in 0..DIM {
            out[[accepted, i]] = row[i];
        }
        accepted += 1;
    }
    Ok(out)
}
