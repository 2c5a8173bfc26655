//! Bayesian linear regression task with a fixed design matrix and a
//! standard normal prior; the posterior is Gaussian in closed form.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sample::{cholesky, spd_inverse, SampleMatrix};

pub const NOISE_SD: f64 = 0.1;

/// Closed-form posterior pieces for one (design, observation) pair:
/// precision = X'X / sd^2 + I, mean = cov * X'y / sd^2.
#[derive(Debug, Clone)]
pub struct BayesLr {
    pub design: Array2<f64>,
    pub noise_sd: f64,
    pub post_mean: Array1<f64>,
    pub post_cov: Array2<f64>,
    pub post_chol: Array2<f64>,
}

impl BayesLr {
    pub fn new(design: Array2<f64>, y_obs: &ArrayView1<f64>, noise_sd: f64) -> Result<Self> {
        if y_obs.len() != design.nrows() {
            return Err(Error::DimensionMismatch {
                context: "BayesLr observation",
                expected: design.nrows(),
                got: y_obs.len(),
            });
        }
        let d = design.ncols();
        let prec_scale = noise_sd.powi(-2);
        let mut a = design.t().dot(&design) * prec_scale;
        for j in 0..d {
            a[[j, j]] += 1.0;
        }
        let post_cov = spd_inverse(&a.view())?;
        let xty = design.t().dot(y_obs);
        let post_mean = post_cov.dot(&xty) * prec_scale;
        let post_chol = cholesky(&post_cov.view())?;
        Ok(Self { design, noise_sd, post_mean, post_cov, post_chol })
    }
}

pub fn simulate(
    design: &ArrayView2<f64>,
    theta: &ArrayView1<f64>,
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
) -> Array1<f64> {
    let mut y = design.dot(theta);
    for v in y.iter_mut() {
        let eps: f64 = StandardNormal.sample(rng);
        *v += noise_sd * eps;
    }
    y
}

/// Exact Gaussian posterior draws.
pub fn reference_sample(lr: &BayesLr, n: usize, seed: u64) -> SampleMatrix {
    let mut rng = rng_from_seed(seed);
    let d = lr.post_mean.len();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let z: Array1<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let draw = &lr.post_mean + &lr.post_chol.dot(&z);
        out.row_mut(i).assign(&draw);
    }
    out
}
