//! Random-walk Metropolis for reference posteriors without closed forms.
//!
//! Multiple chains run independently (in parallel), each with a Gaussian
//! random-walk proposal whose global scale is tuned during burn-in toward
//! the classic 0.234 acceptance rate and frozen afterwards. An optional
//! mirror move proposes coordinate sign flips, which is what lets chains hop
//! between symmetric posterior modes; the flip set is resampled uniformly,
//! so the proposal stays symmetric and the acceptance rule unchanged.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sample::evenly_spaced;

/// Coordinate sign-flip move: with probability `prob` a step negates a
/// random subset of `dims` instead of taking a random-walk step.
#[derive(Debug, Clone)]
pub struct Mirror {
    pub dims: Vec<usize>,
    pub prob: f64,
}

#[derive(Debug, Clone)]
pub struct MhConfig {
    pub chains: usize,
    /// Steps per chain, including burn-in.
    pub steps: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    /// Per-dimension random-walk scale (multiplied by the adapted factor).
    pub proposal_scale: Array1<f64>,
    pub adapt: bool,
    pub mirror: Option<Mirror>,
    pub seed: u64,
}

impl MhConfig {
    pub fn new(proposal_scale: Array1<f64>, seed: u64) -> Self {
        Self {
            chains: 8,
            steps: 20_000,
            burn_in: 10_000,
            thin: 1,
            proposal_scale,
            adapt: true,
            mirror: None,
            seed,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::InvalidConfig("MH needs at least 2 chains for split-Rhat".into()));
        }
        if self.steps <= self.burn_in {
            return Err(Error::InvalidConfig("MH steps must exceed burn_in".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("MH thin must be at least 1".into()));
        }
        if self.proposal_scale.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "MH proposal scale",
                expected: dim,
                got: self.proposal_scale.len(),
            });
        }
        if self.proposal_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig("MH proposal scale must be positive".into()));
        }
        if let Some(m) = &self.mirror {
            if !(0.0..1.0).contains(&m.prob) {
                return Err(Error::InvalidConfig("mirror probability must be in [0, 1)".into()));
            }
            if m.dims.iter().any(|d| *d >= dim) {
                return Err(Error::InvalidConfig("mirror dimension out of range".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MhRun {
    /// Post-burn-in states of all chains, thinned and concatenated.
    pub samples: Array2<f64>,
    /// Random-walk acceptance rate after burn-in, averaged over chains.
    pub acceptance: f64,
    /// Largest split-Rhat over dimensions; values near 1 indicate mixing.
    pub split_rhat: f64,
}

const ADAPT_WINDOW: usize = 50;
const TARGET_ACCEPT: f64 = 0.234;

/// Runs `cfg.chains` random-walk Metropolis chains from the given start
/// points (one row per chain) against `log_target`, which may return
/// `-inf` outside the support.
pub fn rw_metropolis<F>(log_target: &F, inits: &ArrayView2<f64>, cfg: &MhConfig) -> Result<MhRun>
where
    F: Fn(&ArrayView1<f64>) -> f64 + Sync,
{
    let dim = inits.ncols();
    cfg.validate(dim)?;
    if inits.nrows() != cfg.chains {
        return Err(Error::DimensionMismatch {
            context: "MH inits",
            expected: cfg.chains,
            got: inits.nrows(),
        });
    }
    let kept_per_chain = (cfg.steps - cfg.burn_in).div_ceil(cfg.thin);
    let chain_results: Vec<_> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(log_target, &inits.row(c), cfg, c as u64, kept_per_chain))
        .collect::<Result<_>>()?;

    let mut samples = Array2::zeros((cfg.chains * kept_per_chain, dim));
    for (c, (kept, _)) in chain_results.iter().enumerate() {
        samples
            .slice_mut(ndarray::s![c * kept_per_chain..(c + 1) * kept_per_chain, ..])
            .assign(kept);
    }
    let acceptance = chain_results.iter().map(|(_, a)| a).sum::<f64>() / cfg.chains as f64;
    let split_rhat = max_split_rhat(&chain_results.iter().map(|(k, _)| k.view()).collect::<Vec<_>>());
    Ok(MhRun {
        samples,
        acceptance,
        split_rhat,
    })
}

/// Runs `rw_metropolis` with thinning set so the pooled output covers `n`
/// rows, then keeps exactly `n` of them, spread evenly across chains.
pub fn sample_n<F>(
    log_target: &F,
    inits: &ArrayView2<f64>,
    cfg: &MhConfig,
    n: usize,
) -> Result<MhRun>
where
    F: Fn(&ArrayView1<f64>) -> f64 + Sync,
{
    if n == 0 {
        return Err(Error::InvalidConfig("requested 0 MH samples".into()));
    }
    let post = cfg.steps.saturating_sub(cfg.burn_in);
    let total = cfg.chains * post;
    if total < n {
        return Err(Error::InvalidConfig(format!(
            "{n} samples requested but the chains only retain {total} states"
        )));
    }
    let mut cfg_n = cfg.clone();
    cfg_n.thin = (total / n).max(1);
    let run = rw_metropolis(log_target, inits, &cfg_n)?;
    let idx = evenly_spaced(run.samples.nrows(), n);
    let mut samples = Array2::zeros((n, run.samples.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        samples.row_mut(r).assign(&run.samples.row(i));
    }
    Ok(MhRun {
        samples,
        acceptance: run.acceptance,
        split_rhat: run.split_rhat,
    })
}

fn run_chain<F>(
    log_target: &F,
    init: &ArrayView1<f64>,
    cfg: &MhConfig,
    chain: u64,
    kept_per_chain: usize,
) -> Result<(Array2<f64>, f64)>
where
    F: Fn(&ArrayView1<f64>) -> f64 + Sync,
{
    let dim = init.len();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0x3C4A_0000 + chain));
    let mut x = init.to_owned();
    let mut lx = log_target(&x.view());
    if !lx.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "MH chain {chain} started outside the support (log target {lx})"
        )));
    }
    let mut log_factor = 0.0f64;
    let mut window_acc = 0usize;
    let mut window_tot = 0usize;
    let mut burn_acc = 0usize;
    let mut post_acc = 0usize;
    let mut post_tot = 0usize;
    let mut kept = Array2::zeros((kept_per_chain, dim));
    let mut kept_rows = 0usize;

    let mut proposal = Array1::zeros(dim);
    for step in 0..cfg.steps {
        let burning = step < cfg.burn_in;
        let mirror_move = cfg
            .mirror
            .as_ref()
            .is_some_and(|m| rng.random_range(0.0..1.0) < m.prob);
        proposal.assign(&x);
        if mirror_move {
            let m = cfg.mirror.as_ref().unwrap();
            for &d in &m.dims {
                if rng.random_range(0.0..1.0) < 0.5 {
                    proposal[d] = -proposal[d];
                }
            }
        } else {
            let factor = log_factor.exp();
            for d in 0..dim {
                let e: f64 = StandardNormal.sample(&mut rng);
                proposal[d] += factor * cfg.proposal_scale[d] * e;
            }
        }
        let lp = log_target(&proposal.view());
        let accept = lp - lx >= 0.0 || rng.random_range(0.0..1.0_f64).ln() < lp - lx;
        if accept {
            x.assign(&proposal);
            lx = lp;
        }
        if !mirror_move {
            if burning {
                window_tot += 1;
                window_acc += accept as usize;
                burn_acc += accept as usize;
                if cfg.adapt && window_tot == ADAPT_WINDOW {
                    let rate = window_acc as f64 / window_tot as f64;
                    log_factor = (log_factor + 0.5 * (rate - TARGET_ACCEPT)).clamp(-10.0, 10.0);
                    window_acc = 0;
                    window_tot = 0;
                }
            } else {
                post_tot += 1;
                post_acc += accept as usize;
            }
        }
        if step + 1 == cfg.burn_in && cfg.burn_in > 0 && burn_acc == 0 {
            return Err(Error::DegenerateSample {
                context: "rw_metropolis",
                detail: format!(
                    "chain {chain} accepted nothing during burn-in; rescale the proposal"
                ),
            });
        }
        if !burning && (step - cfg.burn_in) % cfg.thin == 0 {
            kept.row_mut(kept_rows).assign(&x);
            kept_rows += 1;
        }
    }
    debug_assert_eq!(kept_rows, kept_per_chain);
    let acc = if post_tot > 0 {
        post_acc as f64 / post_tot as f64
    } else {
        f64::NAN
    };
    Ok((kept, acc))
}

/// Split-Rhat: each chain is halved, and between/within variances of the
/// resulting sequences are compared per dimension. Returns the max over
/// dimensions.
pub fn max_split_rhat(chains: &[ArrayView2<f64>]) -> f64 {
    let dim = chains[0].ncols();
    let half = chains[0].nrows() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let mut worst = 0.0f64;
    for d in 0..dim {
        let mut seqs: Vec<Vec<f64>> = Vec::with_capacity(chains.len() * 2);
        for ch in chains {
            let col: Vec<f64> = ch.column(d).to_vec();
            seqs.push(col[..half].to_vec());
            seqs.push(col[half..2 * half].to_vec());
        }
        worst = worst.max(split_rhat_1d(&seqs));
    }
    worst
}

fn split_rhat_1d(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len() as f64;
    let n = seqs[0].len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| s.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = seqs
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_hat = (n - 1.0) / n * w + b / n;
    (var_hat / w).sqrt()
}

/// Start points jittered around a center, one row per chain.
pub fn jittered_inits(
    center: &ArrayView1<f64>,
    jitter: &ArrayView1<f64>,
    chains: usize,
    seed: u64,
) -> Array2<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, 0x1217));
    let mut out = Array2::zeros((chains, center.len()));
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v = center[j] + jitter[j] * e;
        }
    }
    out
}
