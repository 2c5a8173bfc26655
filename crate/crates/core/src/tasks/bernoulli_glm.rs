//! Bernoulli GLM task: per-bin spikes from a logistic model whose
//! predictor is an intercept plus a 9-bin stimulus window; the observation
//! is the sufficient statistic S = X'y.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, s};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{sigmoid, softplus};
use crate::sample::spd_inverse;

pub const BINS: usize = 100;
pub const WINDOW: usize = 9;
pub const THETA_DIM: usize = WINDOW + 1;

/// Design matrix: row k is [1, stim[k], stim[k-1], ..., stim[k-8]] with
/// zero padding before the series starts.
pub fn design_matrix(stimulus: &ArrayView1<f64>) -> Array2<f64> {
    let mut x = Array2::zeros((BINS, THETA_DIM));
    for k in 0..BINS {
        x[[k, 0]] = 1.0;
        for j in 0..WINDOW {
            if k >= j {
                x[[k, j + 1]] = stimulus[k - j];
            }
        }
    }
    x
}

/// One Bernoulli draw per bin, reduced to S = X'y.
pub fn simulate(
    design: &ArrayView2<f64>,
    theta: &ArrayView1<f64>,
    rng: &mut ChaCha8Rng,
) -> Array1<f64> {
    let logits = design.dot(theta);
    let mut s = Array1::zeros(design.ncols());
    for k in 0..design.nrows() {
        if rng.random::<f64>() < sigmoid(logits[k]) {
            s += &design.row(k);
        }
    }
    s
}

/// Log-likelihood of theta given the sufficient statistic:
/// S'theta - sum_k softplus(x_k'theta).
pub fn log_likelihood(
    design: &ArrayView2<f64>,
    theta: &ArrayView1<f64>,
    s_obs: &ArrayView1<f64>,
) -> f64 {
    let logits = design.dot(theta);
    s_obs.dot(theta) - logits.iter().map(|v| softplus(*v)).sum::<f64>()
}

/// Second-difference penalty matrix F (9x9):
/// F[j,j] = 1 + sqrt(j/9), F[j,j-1] = -2, F[j,j-2] = 1 (0-indexed rows).
pub fn prior_f() -> Array2<f64> {
    let mut f = Array2::zeros((WINDOW, WINDOW));
    for j in 0..WINDOW {
        f[[j, j]] = 1.0 + (j as f64 / WINDOW as f64).sqrt();
        if j >= 1 {
            f[[j, j - 1]] = -2.0;
        }
        if j >= 2 {
            f[[j, j - 2]] = 1.0;
        }
    }
    f
}

/// Prior covariance: 2 for the intercept, (F'F)^-1 for the window weights.
pub fn prior_covariance() -> Result<Array2<f64>> {
    let f = prior_f();
    let inv = spd_inverse(&f.t().dot(&f).view())?;
    let mut sigma = Array2::zeros((THETA_DIM, THETA_DIM));
    sigma[[0, 0]] = 2.0;
    sigma.slice_mut(s![1.., 1..]).assign(&inv);
    Ok(sigma)
}
