//! Simple-likelihood complex-posterior task: eight i.i.d. bivariate normal
//! points whose mean and covariance are nonlinear in a 5D parameter. The
//! squared scales make the posterior symmetric in the signs of theta3 and
//! theta4 (four modes).

use ndarray::{Array1, ArrayView1};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::density::LN_2PI;

pub const POINTS: usize = 8;
pub const X_DIM: usize = 2 * POINTS;

/// Mean and covariance Cholesky factor of one bivariate point:
/// m = (t1, t2), s1 = t3^2, s2 = t4^2, rho = tanh t5.
pub fn dist_params(theta: &ArrayView1<f64>) -> ([f64; 2], [[f64; 2]; 2]) {
    let s1 = theta[2] * theta[2];
    let s2 = theta[3] * theta[3];
    let rho = theta[4].tanh();
    let l = [[s1, 0.0], [rho * s2, s2 * (1.0 - rho * rho).sqrt()]];
    ([theta[0], theta[1]], l)
}

pub fn simulate(theta: &ArrayView1<f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let (m, l) = dist_params(theta);
    let mut out = Array1::zeros(X_DIM);
    for k in 0..POINTS {
        let e0: f64 = StandardNormal.sample(rng);
        let e1: f64 = StandardNormal.sample(rng);
        out[2 * k] = m[0] + l[0][0] * e0;
        out[2 * k + 1] = m[1] + l[1][0] * e0 + l[1][1] * e1;
    }
    out
}

/// Exact log-likelihood of a flattened 16D observation. Degenerate scales
/// (t3 or t4 equal to 0) give -inf.
pub fn log_likelihood(theta: &ArrayView1<f64>, x: &ArrayView1<f64>) -> f64 {
    let (m, l) = dist_params(theta);
    let det = l[0][0] * l[1][1];
    if !(det > 0.0) || !det.is_finite() {
        return f64::NEG_INFINITY;
    }
    let log_norm = -LN_2PI - det.ln();
    let mut total = 0.0;
    for k in 0..POINTS {
        let w0 = (x[2 * k] - m[0]) / l[0][0];
        let w1 = (x[2 * k + 1] - m[1] - l[1][0] * w0) / l[1][1];
        total += log_norm - 0.5 * (w0 * w0 + w1 * w1);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::sample::{mean, sample_sd};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn covariance_factor_reconstructs_sigma() {
        let theta = array![0.7, -2.9, -1.0, -0.9, 0.6];
        let (_, l) = dist_params(&theta.view());
        let s1 = 1.0f64;
        let s2 = 0.81f64;
        let rho = 0.6f64.tanh();
        assert_abs_diff_eq!(l[0][0] * l[0][0], s1 * s1, epsilon = 1e-12);
        assert_abs_diff_eq!(l[1][0] * l[0][0], rho * s1 * s2, epsilon = 1e-12);
        assert_abs_diff_eq!(l[1][0] * l[1][0] + l[1][1] * l[1][1], s2 * s2, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_matches_standard_normal_case() {
        // t = (0,0,1,1,0) gives eight independent standard bivariate normals.
        let theta = array![0.0, 0.0, 1.0, 1.0, 0.0];
        let x = Array1::zeros(X_DIM);
        let want = -(X_DIM as f64) * 0.5 * LN_2PI;
        assert_abs_diff_eq!(log_likelihood(&theta.view(), &x.view()), want, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_is_sign_symmetric() {
        let mut rng = rng_from_seed(3);
        let theta = array![0.7, -2.9, -1.0, -0.9, 0.6];
        let x = simulate(&theta.view(), &mut rng);
        let base = log_likelihood(&theta.view(), &x.view());
        let flipped = array![0.7, -2.9, 1.0, 0.9, 0.6];
        assert_abs_diff_eq!(log_likelihood(&flipped.view(), &x.view()), base, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_scale_is_rejected() {
        let theta = array![0.0, 0.0, 0.0, 1.0, 0.0];
        let x = Array1::zeros(X_DIM);
        assert_eq!(log_likelihood(&theta.view(), &x.view()), f64::NEG_INFINITY);
    }

    #[test]
    fn simulated_moments_match_parameters() {
        let theta = array![0.5, -0.5, 1.2, 0.8, 0.0];
        let mut rng = rng_from_seed(9);
        let mut firsts = Vec::new();
        let mut seconds = Vec::new();
        for _ in 0..20_000 {
            let x = simulate(&theta.view(), &mut rng);
            firsts.push(x[0]);
            seconds.push(x[1]);
        }
        assert!((mean(&firsts) - 0.5).abs() < 0.05);
        assert!((mean(&seconds) + 0.5).abs() < 0.05);
        // SDs are t3^2 = 1.44 and t4^2 = 0.64.
        assert!((sample_sd(&firsts) - 1.44).abs() < 0.05);
        assert!((sample_sd(&seconds) - 0.64).abs() < 0.05);
    }
}
