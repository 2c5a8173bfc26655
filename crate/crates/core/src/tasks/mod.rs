//! Benchmark task registry: prior, simulator, observed data, true
//! parameter, and reference-posterior sampler for six problems.
//!
//! Fixed per-task data (the regression design matrix, the GLM stimulus,
//! and the frozen x_obs draws) ship as CSV assets generated once from
//! seeds derived off `ASSET_SEED`. The ignored `regenerate` test rebuilds
//! them in place; `embedded_assets_match_their_seeds` keeps the embedded
//! copies honest.

pub mod mh;

mod bayes_lr;
mod bernoulli_glm;
mod gmm1d;
mod sisson;
mod slcp;
mod two_moons;

use ndarray::{array, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::density::LN_2PI;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sample::{cholesky, forward_substitute, parse_csv, SampleMatrix};
use mh::{MhConfig, Mirror};

#[cfg(test)]
const ASSET_SEED: u64 = 0x5EED_CAFE;

const LR_X_CSV: &str = include_str!("../../assets/lr_x.csv");
const LR_THETA_TRUE_CSV: &str = include_str!("../../assets/lr_theta_true.csv");
const LR_X_OBS_CSV: &str = include_str!("../../assets/lr_x_obs.csv");
const GLM_STIMULUS_CSV: &str = include_str!("../../assets/glm_stimulus.csv");
const GLM_X_OBS_CSV: &str = include_str!("../../assets/glm_x_obs.csv");
const SLCP_X_OBS_CSV: &str = include_str!("../../assets/slcp_x_obs.csv");

const SLCP_THETA_TRUE: [f64; 5] = [0.7, -2.9, -1.0, -0.9, 0.6];
const GLM_THETA_TRUE: [f64; 10] = [
    0.955, -0.452, 0.223, 1.105, 0.271, -0.358, -0.672, -0.206, 0.306, -0.436,
];

/// Width reported for an unbounded Gaussian dimension: 4 SDs (roughly the
/// central 95%), playing the role a box width plays for uniform priors.
const GAUSSIAN_RANGE_SDS: f64 = 4.0;

/// Proposal scale for MH chains, as a fraction of prior range.
pub const MH_SCALE_FRACTION: f64 = 0.1;
const SLCP_MIRROR_PROB: f64 = 0.2;

#[derive(Debug, Clone)]
pub enum Prior {
    BoxUniform { lo: Array1<f64>, hi: Array1<f64> },
    Gaussian { mean: Array1<f64>, chol: Array2<f64> },
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::BoxUniform { lo, .. } => lo.len(),
            Prior::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> SampleMatrix {
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        match self {
            Prior::BoxUniform { lo, hi } => {
                for i in 0..n {
                    for j in 0..d {
                        out[[i, j]] = rng.random_range(lo[j]..hi[j]);
                    }
                }
            }
            Prior::Gaussian { mean, chol } => {
                for i in 0..n {
                    let z: Array1<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                    out.row_mut(i).assign(&(mean + &chol.dot(&z)));
                }
            }
        }
        out
    }

    pub fn log_density(&self, theta: &ArrayView1<f64>) -> f64 {
        match self {
            Prior::BoxUniform { lo, hi } => {
                if !self.contains(theta) {
                    return f64::NEG_INFINITY;
                }
                -lo.iter().zip(hi).map(|(a, b)| (b - a).ln()).sum::<f64>()
            }
            Prior::Gaussian { mean, chol } => {
                let centered = theta - mean;
                let w = forward_substitute(&chol.view(), &centered.view());
                let log_det: f64 = (0..mean.len()).map(|j| chol[[j, j]].ln()).sum();
                -0.5 * w.dot(&w) - 0.5 * mean.len() as f64 * LN_2PI - log_det
            }
        }
    }

    pub fn contains(&self, theta: &ArrayView1<f64>) -> bool {
        match self {
            Prior::BoxUniform { lo, hi } => theta
                .iter()
                .enumerate()
                .all(|(j, v)| *v >= lo[j] && *v <= hi[j]),
            Prior::Gaussian { .. } => true,
        }
    }

    /// Box bounds when the support is bounded.
    pub fn support(&self) -> Option<(ArrayView1<'_, f64>, ArrayView1<'_, f64>)> {
        match self {
            Prior::BoxUniform { lo, hi } => Some((lo.view(), hi.view())),
            Prior::Gaussian { .. } => None,
        }
    }

    /// Per-dimension width: box width, or 4 marginal SDs for a Gaussian.
    pub fn ranges(&self) -> Array1<f64> {
        match self {
            Prior::BoxUniform { lo, hi } => hi - lo,
            Prior::Gaussian { chol, .. } => {
                let d = self.dim();
                Array1::from_iter((0..d).map(|j| {
                    let var: f64 = (0..=j).map(|k| chol[[j, k]] * chol[[j, k]]).sum();
                    GAUSSIAN_RANGE_SDS * var.sqrt()
                }))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Gmm1d,
    TwoMoons,
    BayesLr(bayes_lr::BayesLr),
    Slcp,
    /// Holds the fixed design matrix.
    BernoulliGlm(Array2<f64>),
    /// Holds the Cholesky factor of the fixed covariance.
    Sisson(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhDiagnostics {
    pub acceptance: f64,
    pub split_rhat: f64,
}

/// Reference-posterior draws plus MH diagnostics when a chain produced them.
#[derive(Debug, Clone)]
pub struct RefSample {
    pub samples: SampleMatrix,
    pub diagnostics: Option<MhDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct Task {
    name: &'static str,
    prior: Prior,
    theta_true: Array1<f64>,
    x_obs: Array1<f64>,
    kind: Kind,
}

pub const NAMES: [&str; 6] = [
    "gmm1d",
    "two_moons",
    "bayes_lr",
    "slcp",
    "bernoulli_glm",
    "sisson",
];

impl Task {
    pub fn by_name(name: &str) -> Result<Task> {
        match name {
            "gmm1d" => Ok(Self::gmm1d()),
            "two_moons" => Ok(Self::two_moons()),
            "bayes_lr" => Self::bayes_lr(),
            "slcp" => Self::slcp(),
            "bernoulli_glm" => Self::bernoulli_glm(),
            "sisson" => Ok(Self::sisson()),
            other => Err(Error::UnknownTask(other.into())),
        }
    }

    pub fn gmm1d() -> Task {
        Task {
            name: "gmm1d",
            prior: Prior::BoxUniform { lo: array![-10.0], hi: array![10.0] },
            theta_true: array![0.0],
            x_obs: array![0.0],
            kind: Kind::Gmm1d,
        }
    }

    pub fn two_moons() -> Task {
        Task {
            name: "two_moons",
            prior: Prior::BoxUniform { lo: array![-1.0, -1.0], hi: array![1.0, 1.0] },
            theta_true: array![0.2475, 0.2475],
            x_obs: array![0.0, 0.0],
            kind: Kind::TwoMoons,
        }
    }

    pub fn bayes_lr() -> Result<Task> {
        let design = parse_csv(LR_X_CSV)?;
        let theta_true = parse_vector(LR_THETA_TRUE_CSV)?;
        let x_obs = parse_vector(LR_X_OBS_CSV)?;
        let lr = bayes_lr::BayesLr::new(design, &x_obs.view(), bayes_lr::NOISE_SD)?;
        let d = theta_true.len();
        Ok(Task {
            name: "bayes_lr",
            prior: Prior::Gaussian { mean: Array1::zeros(d), chol: Array2::eye(d) },
            theta_true,
            x_obs,
            kind: Kind::BayesLr(lr),
        })
    }

    pub fn slcp() -> Result<Task> {
        Ok(Task {
            name: "slcp",
            prior: Prior::BoxUniform {
                lo: Array1::from_elem(5, -3.0),
                hi: Array1::from_elem(5, 3.0),
            },
            theta_true: Array1::from_iter(SLCP_THETA_TRUE),
            x_obs: parse_vector(SLCP_X_OBS_CSV)?,
            kind: Kind::Slcp,
        })
    }

    pub fn bernoulli_glm() -> Result<Task> {
        let stimulus = parse_vector(GLM_STIMULUS_CSV)?;
        let design = bernoulli_glm::design_matrix(&stimulus.view());
        let sigma = bernoulli_glm::prior_covariance()?;
        let chol = cholesky(&sigma.view())?;
        Ok(Task {
            name: "bernoulli_glm",
            prior: Prior::Gaussian {
                mean: Array1::zeros(bernoulli_glm::THETA_DIM),
                chol,
            },
            theta_true: Array1::from_iter(GLM_THETA_TRUE),
            x_obs: parse_vector(GLM_X_OBS_CSV)?,
            kind: Kind::BernoulliGlm(design),
        })
    }

    pub fn sisson() -> Task {
        Task {
            name: "sisson",
            prior: Prior::BoxUniform {
                lo: Array1::from_elem(3, -20.0),
                hi: Array1::from_elem(3, 40.0),
            },
            theta_true: array![5.0, 5.0, 5.0],
            x_obs: array![5.0, 5.0, 5.0],
            kind: Kind::Sisson(sisson::sigma_chol()),
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn theta_dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn x_dim(&self) -> usize {
        self.x_obs.len()
    }

    pub fn x_obs(&self) -> ArrayView1<'_, f64> {
        self.x_obs.view()
    }

    pub fn theta_true(&self) -> ArrayView1<'_, f64> {
        self.theta_true.view()
    }

    /// Closed-form posterior moments where they exist (Bayesian LR).
    pub fn closed_form_posterior(&self) -> Option<(ArrayView1<'_, f64>, ArrayView2<'_, f64>)> {
        match &self.kind {
            Kind::BayesLr(lr) => Some((lr.post_mean.view(), lr.post_cov.view())),
            _ => None,
        }
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn prior_sample(&self, n: usize, seed: u64) -> SampleMatrix {
        let mut rng = rng_from_seed(seed);
        self.prior.sample(n, &mut rng)
    }

    pub fn prior_log_density(&self, theta: &ArrayView1<f64>) -> f64 {
        self.prior.log_density(theta)
    }

    pub fn prior_ranges(&self) -> Array1<f64> {
        self.prior.ranges()
    }

    pub fn simulate(&self, theta: &ArrayView1<f64>, seed: u64) -> Result<Array1<f64>> {
        if theta.len() != self.theta_dim() {
            return Err(Error::DimensionMismatch {
                context: "simulate theta",
                expected: self.theta_dim(),
                got: theta.len(),
            });
        }
        if !self.prior.contains(theta) {
            return Err(Error::InvalidConfig(format!(
                "theta outside the {} prior support",
                self.name
            )));
        }
        let mut rng = rng_from_seed(seed);
        Ok(match &self.kind {
            Kind::Gmm1d => array![gmm1d::simulate(theta[0], &mut rng)],
            Kind::TwoMoons => two_moons::simulate(theta, &mut rng),
            Kind::BayesLr(lr) => {
                bayes_lr::simulate(&lr.design.view(), theta, lr.noise_sd, &mut rng)
            }
            Kind::Slcp => slcp::simulate(theta, &mut rng),
            Kind::BernoulliGlm(design) => {
                bernoulli_glm::simulate(&design.view(), theta, &mut rng)
            }
            Kind::Sisson(chol) => sisson::simulate(theta, &chol.view(), &mut rng),
        })
    }

    /// One simulator draw per row, seeded per row off `seed`, so row i's
    /// output does not depend on how many rows surround it.
    pub fn simulate_batch(&self, thetas: &ArrayView2<f64>, seed: u64) -> Result<SampleMatrix> {
        if thetas.ncols() != self.theta_dim() {
            return Err(Error::DimensionMismatch {
                context: "simulate_batch theta",
                expected: self.theta_dim(),
                got: thetas.ncols(),
            });
        }
        let rows: Vec<Array1<f64>> = (0..thetas.nrows())
            .into_par_iter()
            .map(|i| self.simulate(&thetas.row(i), derive_seed(seed, i as u64)))
            .collect::<Result<_>>()?;
        let mut out = Array2::zeros((thetas.nrows(), self.x_dim()));
        for (i, r) in rows.iter().enumerate() {
            out.row_mut(i).assign(r);
        }
        Ok(out)
    }

    /// Draws from the true posterior at `x_obs`. Exact for GMM, Two Moons,
    /// Bayesian LR, and Sisson; MH-based for SLCP and the Bernoulli GLM
    /// (with diagnostics attached).
    pub fn reference_sample(&self, n: usize, seed: u64) -> Result<RefSample> {
        if n == 0 {
            return Err(Error::InvalidConfig("requested an empty reference sample".into()));
        }
        let exact = |samples| RefSample { samples, diagnostics: None };
        match &self.kind {
            Kind::Gmm1d => {
                let (lo, hi) = self.prior.support().expect("box prior");
                Ok(exact(gmm1d::reference_sample(self.x_obs[0], lo[0], hi[0], n, seed)?))
            }
            Kind::TwoMoons => {
                let (lo, hi) = self.prior.support().expect("box prior");
                Ok(exact(two_moons::reference_sample(
                    &self.x_obs.view(),
                    lo[0],
                    hi[0],
                    n,
                    seed,
                )?))
            }
            Kind::BayesLr(lr) => Ok(exact(bayes_lr::reference_sample(lr, n, seed))),
            Kind::Sisson(_) => {
                let (lo, hi) = self.prior.support().expect("box prior");
                Ok(exact(sisson::reference_sample(
                    &self.x_obs.view(),
                    lo[0],
                    hi[0],
                    n,
                    seed,
                )?))
            }
            Kind::Slcp | Kind::BernoulliGlm(_) => self.mh_reference(n, seed),
        }
    }

    fn mh_reference(&self, n: usize, seed: u64) -> Result<RefSample> {
        let scale = self.prior_ranges() * MH_SCALE_FRACTION;
        let mut cfg = MhConfig::new(scale, derive_seed(seed, 0x4D48_0001));
        if matches!(self.kind, Kind::Slcp) {
            // The posterior is symmetric in the signs of theta3/theta4;
            // mirror moves let chains hop between the four modes.
            cfg.mirror = Some(Mirror { dims: vec![2, 3], prob: SLCP_MIRROR_PROB });
        }
        let jitter = self.prior_ranges() * 0.02;
        let mut inits = mh::jittered_inits(
            &self.theta_true.view(),
            &jitter.view(),
            cfg.chains,
            derive_seed(seed, 0x4D48_0002),
        );
        if let Some((lo, hi)) = self.prior.support() {
            for mut row in inits.rows_mut() {
                for j in 0..row.len() {
                    row[j] = row[j].clamp(lo[j], hi[j]);
                }
            }
        }
        let target = |t: &ArrayView1<f64>| {
            let lp = self.prior.log_density(t);
            if !lp.is_finite() {
                return f64::NEG_INFINITY;
            }
            lp + match &self.kind {
                Kind::Slcp => slcp::log_likelihood(t, &self.x_obs.view()),
                Kind::BernoulliGlm(design) => {
                    bernoulli_glm::log_likelihood(&design.view(), t, &self.x_obs.view())
                }
                _ => unreachable!("mh_reference is only wired to MH-based tasks"),
            }
        };
        let run = mh::sample_n(&target, &inits.view(), &cfg, n)?;
        Ok(RefSample {
            samples: run.samples,
            diagnostics: Some(MhDiagnostics {
                acceptance: run.acceptance,
                split_rhat: run.split_rhat,
            }),
        })
    }
}

fn parse_vector(text: &str) -> Result<Array1<f64>> {
    let parsed = parse_csv(text)?;
    if parsed.nrows() != 1 {
        return Err(Error::InvalidConfig(format!(
            "expected a single-row vector asset, got {} rows",
            parsed.nrows()
        )));
    }
    Ok(parsed.row(0).to_owned())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trips_names() {
        for name in NAMES {
            let task = Task::by_name(name).unwrap();
            assert_eq!(task.name(), name);
        }
        assert!(matches!(Task::by_name("nope"), Err(Error::UnknownTask(_))));
    }

    #[test]
    fn dimensions_are_as_documented() {
        let want = [
            ("gmm1d", 1, 1),
            ("two_moons", 2, 2),
            ("bayes_lr", 6, 10),
            ("slcp", 5, 16),
            ("bernoulli_glm", 10, 10),
            ("sisson", 3, 3),
        ];
        for (name, td, xd) in want {
            let task = Task::by_name(name).unwrap();
            assert_eq!(task.theta_dim(), td, "{name}");
            assert_eq!(task.x_dim(), xd, "{name}");
        }
    }

    #[test]
    fn theta_true_is_supported_and_simulates_to_x_dim() {
        for name in NAMES {
            let task = Task::by_name(name).unwrap();
            assert!(task.prior().contains(&task.theta_true()), "{name}");
            let x = task.simulate(&task.theta_true(), 42).unwrap();
            assert_eq!(x.len(), task.x_dim(), "{name}");
            assert!(x.iter().all(|v| v.is_finite()), "{name}");
        }
    }

    #[test]
    fn prior_sample_moments() {
        let gmm = Task::gmm1d();
        let draws = gmm.prior_sample(100_000, 1);
        assert!(draws.iter().all(|v| (-10.0..=10.0).contains(v)));
        let m = draws.mean().unwrap();
        assert!(m.abs() < 0.1, "mean = {m}");

        let sisson = Task::sisson();
        assert!(sisson
            .prior_sample(10_000, 2)
            .iter()
            .all(|v| (-20.0..=40.0).contains(v)));

        let lr = Task::bayes_lr().unwrap();
        let draws = lr.prior_sample(100_000, 3);
        for j in 0..6 {
            for k in j..6 {
                let cj = draws.column(j);
                let ck = draws.column(k);
                let mj = cj.mean().unwrap();
                let mk = ck.mean().unwrap();
                let cov = cj
                    .iter()
                    .zip(ck)
                    .map(|(a, b)| (a - mj) * (b - mk))
                    .sum::<f64>()
                    / (draws.nrows() - 1) as f64;
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((cov - want).abs() < 0.05, "cov[{j},{k}] = {cov}");
            }
        }
    }

    #[test]
    fn prior_log_density_values() {
        let gmm = Task::gmm1d();
        let inside = gmm.prior_log_density(&array![0.0].view());
        assert!((inside - (-(20.0f64).ln())).abs() < 1e-12);
        assert_eq!(
            gmm.prior_log_density(&array![10.5].view()),
            f64::NEG_INFINITY
        );

        let lr = Task::bayes_lr().unwrap();
        let at_zero = lr.prior_log_density(&Array1::zeros(6).view());
        assert!((at_zero - (-3.0 * LN_2PI)).abs() < 1e-12);
    }

    #[test]
    fn ranges_cover_box_and_gaussian() {
        let gmm = Task::gmm1d();
        assert_eq!(gmm.prior_ranges(), array![20.0]);
        let lr = Task::bayes_lr().unwrap();
        assert_eq!(lr.prior_ranges(), Array1::from_elem(6, 4.0));
        let glm = Task::bernoulli_glm().unwrap();
        let r = glm.prior_ranges();
        assert!((r[0] - 4.0 * 2.0f64.sqrt()).abs() < 1e-12);
        assert!(r.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn simulate_rejects_unsupported_theta() {
        let gmm = Task::gmm1d();
        assert!(gmm.simulate(&array![11.0].view(), 0).is_err());
        assert!(gmm.simulate(&array![1.0, 2.0].view(), 0).is_err());
    }

    #[test]
    fn simulate_batch_is_per_row_deterministic() {
        let task = Task::two_moons();
        let thetas = task.prior_sample(20, 9);
        let a = task.simulate_batch(&thetas.view(), 77).unwrap();
        let b = task.simulate_batch(&thetas.view(), 77).unwrap();
        assert_eq!(a, b);
        // The first rows do not depend on the rows behind them.
        let head = task
            .simulate_batch(&thetas.slice(ndarray::s![..5, ..]), 77)
            .unwrap();
        assert_eq!(head, a.slice(ndarray::s![..5, ..]));
        let c = task.simulate_batch(&thetas.view(), 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn exact_reference_samplers_dispatch() {
        for name in ["gmm1d", "two_moons", "bayes_lr", "sisson"] {
            let task = Task::by_name(name).unwrap();
            let r = task.reference_sample(500, 5).unwrap();
            assert_eq!(r.samples.dim(), (500, task.theta_dim()));
            assert!(r.diagnostics.is_none(), "{name}");
            assert!(
                r.samples.rows().into_iter().all(|row| task.prior().contains(&row)),
                "{name}"
            );
        }
    }

    #[test]
    fn slcp_reference_mixes_across_modes() {
        let task = Task::slcp().unwrap();
        let r = task.reference_sample(2_000, 11).unwrap();
        assert_eq!(r.samples.dim(), (2_000, 5));
        let diag = r.diagnostics.unwrap();
        assert!(diag.split_rhat < 1.05, "split-Rhat = {}", diag.split_rhat);
        assert!(r.samples.rows().into_iter().all(|row| task.prior().contains(&row)));
        // Sign symmetry of theta3: both branches populated.
        let pos = r.samples.column(2).iter().filter(|v| **v > 0.0).count() as f64 / 2_000.0;
        assert!((0.35..=0.65).contains(&pos), "positive theta3 fraction = {pos}");
    }

    #[test]
    fn glm_reference_mixes() {
        let task = Task::bernoulli_glm().unwrap();
        let r = task.reference_sample(2_000, 19).unwrap();
        let diag = r.diagnostics.unwrap();
        assert!(diag.split_rhat < 1.05, "split-Rhat = {}", diag.split_rhat);
        assert!(diag.acceptance > 0.05 && diag.acceptance < 0.6, "acceptance = {}", diag.acceptance);
        // 100 Bernoulli bins pin the posterior loosely around theta_true.
        let m0 = r.samples.column(0).mean().unwrap();
        assert!((m0 - GLM_THETA_TRUE[0]).abs() < 1.0, "intercept mean = {m0}");
    }

    #[test]
    fn reference_sample_rejects_empty_request() {
        assert!(Task::gmm1d().reference_sample(0, 1).is_err());
    }
}
