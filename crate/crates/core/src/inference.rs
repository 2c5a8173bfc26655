//! Sequential posterior estimation with simulator-call reduction.
//!
//! Six strategies share one budget-accounting core:
//!
//! - `regular`: multi-round atomic-loss posterior fitting, budget split
//!   evenly across rounds.
//! - `surrogate`: spend the whole budget up front, fit a conditional
//!   likelihood model alongside the posterior, then run later rounds on
//!   synthetic pairs drawn from that model instead of the simulator.
//! - `sp`: draw an oversampled pool per round and reduce it to the round
//!   budget with support points before simulating.
//! - `combined`: support-point reduction in round one, synthetic rounds
//!   afterwards.
//! - `snle`: fit the likelihood model directly and sample the posterior
//!   with random-walk Metropolis.
//! - `snle_surrogate`: one real round of likelihood fitting, then a
//!   synthetic-pair posterior fit that needs no further MCMC at eval time.
//!
//! Every strategy calls the simulator exactly `budget` times; `sim_calls`
//! in the returned [`PosteriorResult`] is counted at the call site and can
//! be audited against the configured budget.

use std::fmt;
use std::time::Instant;

use ndarray::{concatenate, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::density::{Mdn, MdnConfig, TruncationPolicy};
use crate::error::{Error, Result};
use crate::nn::{TrainConfig, TrainReport};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sample::SampleMatrix;
use crate::support_points::{support_points_with_trace, SpConfig};
use crate::tasks::{mh, Task};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Regular,
    Surrogate,
    Sp,
    Combined,
    Snle,
    SnleSurrogate,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Regular,
        Method::Surrogate,
        Method::Sp,
        Method::Combined,
        Method::Snle,
        Method::SnleSurrogate,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "regular" => Ok(Method::Regular),
            "surrogate" => Ok(Method::Surrogate),
            "sp" => Ok(Method::Sp),
            "combined" => Ok(Method::Combined),
            "snle" => Ok(Method::Snle),
            "snle_surrogate" => Ok(Method::SnleSurrogate),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Regular => "regular",
            Method::Surrogate => "surrogate",
            Method::Sp => "sp",
            Method::Combined => "combined",
            Method::Snle => "snle",
            Method::SnleSurrogate => "snle_surrogate",
        }
    }

    /// Whether the simulation budget is split across rounds (as opposed to
    /// being spent entirely in round one).
    pub fn splits_budget(&self) -> bool {
        matches!(self, Method::Regular | Method::Sp | Method::Snle)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn default_rounds() -> usize {
    2
}

pub(crate) fn default_multiplier() -> usize {
    10
}

pub(crate) fn default_oversample() -> usize {
    2
}

pub(crate) fn default_atoms() -> usize {
    10
}

pub(crate) fn default_n_post() -> usize {
    5000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub task: String,
    pub method: Method,
    /// Total simulator calls the run is allowed; spent exactly.
    pub budget: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Synthetic draws per round, as a multiple of `budget`.
    #[serde(default = "default_multiplier")]
    pub surrogate_multiplier: usize,
    /// Candidate-pool size for support points, as a multiple of the round
    /// budget.
    #[serde(default = "default_oversample")]
    pub sp_oversample: usize,
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    /// Posterior sample size returned by the run.
    #[serde(default = "default_n_post")]
    pub n_post: usize,
    #[serde(default)]
    pub mdn: MdnConfig,
    /// Template for every fit in the run; its seed field is replaced by
    /// values derived from `seed`.
    #[serde(default)]
    pub train: TrainConfig,
    pub seed: u64,
}

impl InferenceConfig {
    pub fn new(task: &str, method: Method, budget: usize, seed: u64) -> Self {
        Self {
            task: task.to_string(),
            method,
            budget,
            rounds: default_rounds(),
            surrogate_multiplier: default_multiplier(),
            sp_oversample: default_oversample(),
            atoms: default_atoms(),
            n_post: default_n_post(),
            mdn: MdnConfig::default(),
            train: TrainConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be positive".into()));
        }
        if self.n_post == 0 {
            return Err(Error::InvalidConfig(
                "n_post must be positive".into(),
            ));
        }
        if self.method.splits_budget() {
            if self.budget < 2 * self.rounds {
                return Err(Error::InvalidConfig(format!(
                    "budget ({}) must be at least 2 per round ({} rounds)",
                    self.budget, self.rounds
                )));
            }
        } else {
            if self.budget < 2 {
                return Err(Error::InvalidConfig(format!(
                    "budget ({}) must be at least 2",
                    self.budget
                )));
            }
            if self.rounds < 2 {
                return Err(Error::InvalidConfig(
                    "surrogate methods need at least 2 rounds: round one is the \
                     only round that touches the simulator"
                        .into(),
                ));
            }
            if self.surrogate_multiplier == 0 {
                return Err(Error::InvalidConfig(
                    "surrogate_multiplier must be at least 1".into(),
                ));
            }
        }
        if matches!(self.method, Method::Sp | Method::Combined) && self.sp_oversample == 0 {
            return Err(Error::InvalidConfig(
                "sp_oversample must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-run bookkeeping surfaced alongside the posterior sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Proposal draws rejected for falling outside the prior box
    /// (posterior leakage).
    pub leakage_rejections: usize,
    /// Set when the likelihood surrogate failed to train and the run fell
    /// back to real pairs only.
    pub surrogate_fallback: bool,
    /// Rounds whose support-point iteration hit max_iters without meeting
    /// the movement tolerance.
    pub sp_unconverged_rounds: usize,
    /// Fits whose training loop tripped the divergence guard (the model
    /// keeps its best snapshot, so the run continues).
    pub diverged_fits: usize,
    /// Total (condition, event) pairs seen by the final posterior fit.
    pub training_pairs: usize,
    pub mh_acceptance: Option<f64>,
    pub mh_split_rhat: Option<f64>,
}

impl RunDiagnostics {
    /// Human-readable notes for anything worth flagging; empty on a clean run.
    pub fn notes(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.surrogate_fallback {
            out.push("surrogate training failed; fell back to real pairs only".to_string());
        }
        if self.sp_unconverged_rounds > 0 {
            out.push(format!(
                "support points hit max_iters in {} round(s)",
                self.sp_unconverged_rounds
            ));
        }
        if self.diverged_fits > 0 {
            out.push(format!(
                "{} fit(s) tripped the divergence guard",
                self.diverged_fits
            ));
        }
        if let Some(rhat) = self.mh_split_rhat {
            if rhat > 1.05 {
                out.push(format!("MH split-Rhat {rhat:.3} exceeds 1.05"));
            }
        }
        out
    }
}

pub struct PosteriorResult {
    /// `n_post` draws from the fitted posterior at the task's observation.
    pub samples: SampleMatrix,
    /// The fitted posterior density model, when the method produces one
    /// (`snle` samples by MCMC instead).
    pub posterior: Option<Mdn>,
    /// The conditional likelihood model, for methods that fit one.
    pub surrogate: Option<Mdn>,
    /// Simulator calls actually made; equals the configured budget.
    pub sim_calls: usize,
    pub wall_secs: f64,
    pub diagnostics: RunDiagnostics,
}

/// Splits `budget` into `rounds` near-equal parts that sum exactly to
/// `budget`, with the remainder going to the earliest rounds.
pub fn round_sizes(budget: usize, rounds: usize) -> Vec<usize> {
    let base = budget / rounds;
    let extra = budget % rounds;
    (0..rounds)
        .map(|r| base + usize::from(r < extra))
        .collect()
}

// Seed-derivation tags. Each round-indexed stream gets its own base so
// streams never collide across purposes.
const TAG_POST_INIT: u64 = 0x01;
const TAG_SUR_INIT: u64 = 0x02;
const TAG_PRIOR: u64 = 0x03;
const TAG_FINAL_DRAW: u64 = 0x04;
const TAG_SIM: u64 = 0x100;
const TAG_FIT: u64 = 0x200;
const TAG_SUR_FIT: u64 = 0x300;
const TAG_PROPOSAL: u64 = 0x400;
const TAG_SP: u64 = 0x500;
const TAG_MH: u64 = 0x600;
const TAG_SUR_DRAW: u64 = 0x700;
const TAG_MH_INIT: u64 = 0x800;

pub fn run(cfg: &InferenceConfig) -> Result<PosteriorResult> {
    cfg.validate()?;
    let task = Task::by_name(&cfg.task)?;
    let started = Instant::now();
    let mut ctx = Ctx::new(&task, cfg);
    let mut result = match cfg.method {
        Method::Regular => ctx.run_regular()?,
        Method::Surrogate => ctx.run_surrogate()?,
        Method::Sp => ctx.run_sp()?,
        Method::Combined => ctx.run_combined()?,
        Method::Snle => ctx.run_snle()?,
        Method::SnleSurrogate => ctx.run_snle_surrogate()?,
    };
    result.wall_secs = started.elapsed().as_secs_f64();
    Ok(result)
}

struct Ctx<'a> {
    task: &'a Task,
    cfg: &'a InferenceConfig,
    sim_calls: usize,
    diag: RunDiagnostics,
    /// Truncates proposal and posterior draws to the prior box; unbounded
    /// for Gaussian priors.
    policy: TruncationPolicy,
}

impl<'a> Ctx<'a> {
    fn new(task: &'a Task, cfg: &'a InferenceConfig) -> Self {
        let policy = match task.prior().support() {
            Some((lo, hi)) => TruncationPolicy::boxed(lo.to_owned(), hi.to_owned()),
            None => TruncationPolicy::unbounded(),
        };
        Self {
            task,
            cfg,
            sim_calls: 0,
            diag: RunDiagnostics::default(),
            policy,
        }
    }

    fn simulate(&mut self, thetas: &ArrayView2<f64>, tag: u64) -> Result<SampleMatrix> {
        self.sim_calls += thetas.nrows();
        self.task
            .simulate_batch(thetas, derive_seed(self.cfg.seed, tag))
    }

    fn train_cfg(&self, tag: u64) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.cfg.seed, tag),
            ..self.cfg.train.clone()
        }
    }

    fn record_fit(&mut self, report: &TrainReport) {
        if report.diverged {
            self.diag.diverged_fits += 1;
        }
    }

    fn new_posterior(&self) -> Result<Mdn> {
        Mdn::new(
            self.task.x_dim(),
            self.task.theta_dim(),
            &self.cfg.mdn,
            derive_seed(self.cfg.seed, TAG_POST_INIT),
        )
    }

    fn new_likelihood(&self) -> Result<Mdn> {
        Mdn::new(
            self.task.theta_dim(),
            self.task.x_dim(),
            &self.cfg.mdn,
            derive_seed(self.cfg.seed, TAG_SUR_INIT),
        )
    }

    /// Draws `n` parameters from the current posterior at the observation,
    /// truncated to the prior support, counting leakage.
    fn proposal_draw(&mut self, posterior: &Mdn, n: usize, tag: u64) -> Result<SampleMatrix> {
        let (thetas, rejected) = posterior.sample_counted(
            &self.task.x_obs(),
            n,
            &self.policy,
            derive_seed(self.cfg.seed, tag),
        )?;
        self.diag.leakage_rejections += rejected;
        Ok(thetas)
    }

    /// Refits the posterior on everything gathered so far. Round one is a
    /// plain maximum-likelihood fit (prior proposal); later rounds use the
    /// atomic loss, which stays valid under arbitrary proposals.
    fn refit_posterior(
        &mut self,
        posterior: &mut Mdn,
        conds: &ArrayView2<f64>,
        events: &ArrayView2<f64>,
        round: usize,
    ) -> Result<()> {
        let tc = self.train_cfg(TAG_FIT + round as u64);
        let task = self.task;
        let report = if round == 0 {
            posterior.fit_mle(conds, events, &tc)?
        } else {
            posterior.fit_atomic(
                conds,
                events,
                &|t: &ArrayView1<f64>| task.prior_log_density(t),
                self.cfg.atoms,
                &tc,
            )?
        };
        self.record_fit(&report);
        self.diag.training_pairs = conds.nrows();
        Ok(())
    }

    /// One synthetic observation per parameter row, drawn from the
    /// likelihood model. Row-keyed seeds keep the result independent of
    /// thread scheduling.
    fn surrogate_draw(
        &self,
        likelihood: &Mdn,
        thetas: &ArrayView2<f64>,
        tag: u64,
    ) -> Result<SampleMatrix> {
        let base = derive_seed(self.cfg.seed, tag);
        let unbounded = TruncationPolicy::unbounded();
        let rows: Vec<Array2<f64>> = thetas
            .rows()
            .into_iter()
            .enumerate()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(i, theta)| {
                likelihood.sample(&theta, 1, &unbounded, derive_seed(base, i as u64))
            })
            .collect::<Result<_>>()?;
        let views: Vec<ArrayView2<f64>> = rows.iter().map(|r| r.view()).collect();
        Ok(concatenate(Axis(0), &views)?)
    }

    /// Final posterior sample at the observation plus result assembly.
    fn finish(&mut self, posterior: Mdn, surrogate: Option<Mdn>) -> Result<PosteriorResult> {
        let (samples, rejected) = posterior.sample_counted(
            &self.task.x_obs(),
            self.cfg.n_post,
            &self.policy,
            derive_seed(self.cfg.seed, TAG_FINAL_DRAW),
        )?;
        self.diag.leakage_rejections += rejected;
        Ok(PosteriorResult {
            samples,
            posterior: Some(posterior),
            surrogate,
            sim_calls: self.sim_calls,
            wall_secs: 0.0,
            diagnostics: self.diag.clone(),
        })
    }

    fn run_regular(&mut self) -> Result<PosteriorResult> {
        let sizes = round_sizes(self.cfg.budget, self.cfg.rounds);
        let mut posterior = self.new_posterior()?;
        let mut all_theta: Vec<SampleMatrix> = Vec::new();
        let mut all_x: Vec<SampleMatrix> = Vec::new();
        for (round, &n_round) in sizes.iter().enumerate() {
            let thetas = if round == 0 {
                self.task
                    .prior_sample(n_round, derive_seed(self.cfg.seed, TAG_PRIOR))
            } else {
                self.proposal_draw(&posterior, n_round, TAG_PROPOSAL + round as u64)?
            };
            let xs = self.simulate(&thetas.view(), TAG_SIM + round as u64)?;
            all_theta.push(thetas);
            all_x.push(xs);
            let conds = vstack(&all_x)?;
            let events = vstack(&all_theta)?;
            self.refit_posterior(&mut posterior, &conds.view(), &events.view(), round)?;
        }
        self.finish(posterior, None)
    }

    /// Fits the likelihood surrogate on `(theta, x)` pairs; returns None
    /// (and flags the fallback) when training fails or diverges.
    fn try_fit_surrogate(
        &mut self,
        thetas: &ArrayView2<f64>,
        xs: &ArrayView2<f64>,
        tag: u64,
    ) -> Result<Option<Mdn>> {
        let mut likelihood = self.new_likelihood()?;
        let tc = self.train_cfg(tag);
        match likelihood.fit_mle(thetas, xs, &tc) {
            Ok(report) if !report.diverged => Ok(Some(likelihood)),
            Ok(_) => {
                self.diag.diverged_fits += 1;
                self.diag.surrogate_fallback = true;
                Ok(None)
            }
            Err(Error::InvalidConfig(_)) | Err(Error::DegenerateSample { .. }) => {
                self.diag.surrogate_fallback = true;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Rounds two onward for the surrogate methods: draw parameters from
    /// the current posterior, pair them with synthetic observations, refit.
    fn synthetic_rounds(
        &mut self,
        posterior: &mut Mdn,
        likelihood: Option<&Mdn>,
        real_theta: &SampleMatrix,
        real_x: &SampleMatrix,
    ) -> Result<()> {
        let mut all_theta = vec![real_theta.clone()];
        let mut all_x = vec![real_x.clone()];
        for round in 1..self.cfg.rounds {
            if let Some(lik) = likelihood {
                let n_syn = self.cfg.surrogate_multiplier * self.cfg.budget;
                let thetas = self.proposal_draw(posterior, n_syn, TAG_PROPOSAL + round as u64)?;
                let xs = self.surrogate_draw(lik, &thetas.view(), TAG_SUR_DRAW + round as u64)?;
                all_theta.push(thetas);
                all_x.push(xs);
            }
            // On fallback the round refits on the real pairs alone.
            let conds = vstack(&all_x)?;
            let events = vstack(&all_theta)?;
            self.refit_posterior(posterior, &conds.view(), &events.view(), round)?;
        }
        Ok(())
    }

    fn run_surrogate(&mut self) -> Result<PosteriorResult> {
        let thetas = self
            .task
            .prior_sample(self.cfg.budget, derive_seed(self.cfg.seed, TAG_PRIOR));
        let xs = self.simulate(&thetas.view(), TAG_SIM)?;
        let mut posterior = self.new_posterior()?;
        self.refit_posterior(&mut posterior, &xs.view(), &thetas.view(), 0)?;
        let likelihood = self.try_fit_surrogate(&thetas.view(), &xs.view(), TAG_SUR_FIT)?;
        self.synthetic_rounds(&mut posterior, likelihood.as_ref(), &thetas, &xs)?;
        self.finish(posterior, likelihood)
    }

    /// Support-point reduction of a candidate pool, clamped back into the
    /// prior box (the repulsion term can push points slightly outside it).
    fn sp_reduce(&mut self, pool: &SampleMatrix, n: usize, tag: u64) -> Result<SampleMatrix> {
        let sp_cfg = SpConfig {
            seed: derive_seed(self.cfg.seed, tag),
            ..SpConfig::default()
        };
        let (mut reduced, trace) = support_points_with_trace(&pool.view(), n, &sp_cfg)?;
        if trace.len() == sp_cfg.max_iters + 1 {
            self.diag.sp_unconverged_rounds += 1;
        }
        if let Some((lo, hi)) = self.task.prior().support() {
            for mut row in reduced.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = v.clamp(lo[j], hi[j]);
                }
            }
        }
        Ok(reduced)
    }

    fn run_sp(&mut self) -> Result<PosteriorResult> {
        let sizes = round_sizes(self.cfg.budget, self.cfg.rounds);
        let mut posterior = self.new_posterior()?;
        let mut all_theta: Vec<SampleMatrix> = Vec::new();
        let mut all_x: Vec<SampleMatrix> = Vec::new();
        for (round, &n_round) in sizes.iter().enumerate() {
            let pool_n = self.cfg.sp_oversample * n_round;
            let pool = if round == 0 {
                self.task
                    .prior_sample(pool_n, derive_seed(self.cfg.seed, TAG_PRIOR))
            } else {
                self.proposal_draw(&posterior, pool_n, TAG_PROPOSAL + round as u64)?
            };
            let thetas = self.sp_reduce(&pool, n_round, TAG_SP + round as u64)?;
            let xs = self.simulate(&thetas.view(), TAG_SIM + round as u64)?;
            all_theta.push(thetas);
            all_x.push(xs);
            let conds = vstack(&all_x)?;
            let events = vstack(&all_theta)?;
            self.refit_posterior(&mut posterior, &conds.view(), &events.view(), round)?;
        }
        self.finish(posterior, None)
    }

    fn run_combined(&mut self) -> Result<PosteriorResult> {
        let pool_n = self.cfg.sp_oversample * self.cfg.budget;
        let pool = self
            .task
            .prior_sample(pool_n, derive_seed(self.cfg.seed, TAG_PRIOR));
        let thetas = self.sp_reduce(&pool, self.cfg.budget, TAG_SP)?;
        let xs = self.simulate(&thetas.view(), TAG_SIM)?;
        let mut posterior = self.new_posterior()?;
        self.refit_posterior(&mut posterior, &xs.view(), &thetas.view(), 0)?;
        let likelihood = self.try_fit_surrogate(&thetas.view(), &xs.view(), TAG_SUR_FIT)?;
        self.synthetic_rounds(&mut posterior, likelihood.as_ref(), &thetas, &xs)?;
        self.finish(posterior, likelihood)
    }

    /// Log posterior density under the fitted likelihood model, for MCMC.
    /// Non-finite model output maps to negative infinity so the chain
    /// simply rejects.
    fn snle_target<'m>(
        &self,
        likelihood: &'m Mdn,
    ) -> impl Fn(&ArrayView1<f64>) -> f64 + Sync + 'm
    where
        'a: 'm,
    {
        let task = self.task;
        let x_obs = task.x_obs().to_owned();
        move |theta: &ArrayView1<f64>| {
            let lp = task.prior_log_density(theta);
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            match likelihood.log_prob(&x_obs.view(), theta) {
                Ok(ll) if ll.is_finite() => lp + ll,
                _ => f64::NEG_INFINITY,
            }
        }
    }

    /// Chain starts: jitter around the best accumulated parameter row,
    /// clamped into the prior box.
    fn snle_inits(
        &self,
        target: &(impl Fn(&ArrayView1<f64>) -> f64 + Sync),
        thetas: &ArrayView2<f64>,
        chains: usize,
        tag: u64,
    ) -> Array2<f64> {
        let scores: Vec<f64> = thetas.rows().into_iter().map(|r| target(&r)).collect();
        let best = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let center = thetas.row(best);
        let ranges = self.task.prior_ranges();
        let mut rng = rng_from_seed(derive_seed(self.cfg.seed, tag));
        let mut inits = Array2::zeros((chains, center.len()));
        for mut row in inits.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let eps: f64 = StandardNormal.sample(&mut rng);
                *v = center[j] + 0.02 * ranges[j] * eps;
            }
        }
        if let Some((lo, hi)) = self.task.prior().support() {
            for mut row in inits.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = v.clamp(lo[j], hi[j]);
                }
            }
        }
        inits
    }

    /// Draws `n` posterior samples by random-walk Metropolis on the
    /// likelihood-model target.
    fn snle_sample(
        &mut self,
        likelihood: &Mdn,
        thetas: &ArrayView2<f64>,
        n: usize,
        round: usize,
    ) -> Result<SampleMatrix> {
        let target = self.snle_target(likelihood);
        let scale = self.task.prior_ranges() * crate::tasks::MH_SCALE_FRACTION;
        let cfg = mh::MhConfig::new(scale, derive_seed(self.cfg.seed, TAG_MH + round as u64));
        let inits = self.snle_inits(&target, thetas, cfg.chains, TAG_MH_INIT + round as u64);
        let run = mh::sample_n(&target, &inits.view(), &cfg, n)?;
        self.diag.mh_acceptance = Some(run.acceptance);
        self.diag.mh_split_rhat = Some(run.split_rhat);
        Ok(run.samples)
    }

    fn run_snle(&mut self) -> Result<PosteriorResult> {
        let sizes = round_sizes(self.cfg.budget, self.cfg.rounds);
        let mut likelihood = self.new_likelihood()?;
        let mut all_theta: Vec<SampleMatrix> = Vec::new();
        let mut all_x: Vec<SampleMatrix> = Vec::new();
        let mut next_thetas: Option<SampleMatrix> = None;
        for (round, &n_round) in sizes.iter().enumerate() {
            let thetas = match next_thetas.take() {
                Some(t) => t,
                None => self
                    .task
                    .prior_sample(n_round, derive_seed(self.cfg.seed, TAG_PRIOR)),
            };
            let xs = self.simulate(&thetas.view(), TAG_SIM + round as u64)?;
            all_theta.push(thetas);
            all_x.push(xs);
            let conds = vstack(&all_theta)?;
            let events = vstack(&all_x)?;
            let tc = self.train_cfg(TAG_FIT + round as u64);
            let report = likelihood.fit_mle(&conds.view(), &events.view(), &tc)?;
            self.record_fit(&report);
            self.diag.training_pairs = conds.nrows();
            let n_draw = if round + 1 < sizes.len() {
                sizes[round + 1]
            } else {
                self.cfg.n_post
            };
            next_thetas = Some(self.snle_sample(&likelihood, &conds.view(), n_draw, round)?);
        }
        let samples = next_thetas.expect("at least one round ran");
        Ok(PosteriorResult {
            samples,
            posterior: None,
            surrogate: Some(likelihood),
            sim_calls: self.sim_calls,
            wall_secs: 0.0,
            diagnostics: self.diag.clone(),
        })
    }

    fn run_snle_surrogate(&mut self) -> Result<PosteriorResult> {
        let thetas = self
            .task
            .prior_sample(self.cfg.budget, derive_seed(self.cfg.seed, TAG_PRIOR));
        let xs = self.simulate(&thetas.view(), TAG_SIM)?;
        let mut likelihood = self.new_likelihood()?;
        let tc = self.train_cfg(TAG_FIT);
        let report = likelihood.fit_mle(&thetas.view(), &xs.view(), &tc)?;
        self.record_fit(&report);

        let mut all_theta = vec![thetas.clone()];
        let mut all_x = vec![xs.clone()];
        for round in 1..self.cfg.rounds {
            let n_syn = self.cfg.surrogate_multiplier * self.cfg.budget;
            let syn_theta = self.snle_sample(&likelihood, &thetas.view(), n_syn, round)?;
            let syn_x = self.surrogate_draw(&likelihood, &syn_theta.view(), TAG_SUR_DRAW + round as u64)?;
            all_theta.push(syn_theta);
            all_x.push(syn_x);
        }

        // Warm-start on the real pairs (prior proposal, plain MLE), then
        // one atomic fit over the mixed-proposal pool.
        let mut posterior = self.new_posterior()?;
        self.refit_posterior(&mut posterior, &xs.view(), &thetas.view(), 0)?;
        let conds = vstack(&all_x)?;
        let events = vstack(&all_theta)?;
        self.refit_posterior(&mut posterior, &conds.view(), &events.view(), 1)?;
        self.finish(posterior, Some(likelihood))
    }
}

fn vstack(parts: &[SampleMatrix]) -> Result<SampleMatrix> {
    let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| p.view()).collect();
    Ok(concatenate(Axis(0), &views)?)
}
