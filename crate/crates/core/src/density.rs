//! Conditional mixture density networks.
//!
//! An [`Mdn`] maps a conditioning vector through a dense trunk to the raw
//! parameters of a full-covariance Gaussian mixture over the event vector:
//! mixture logits, component means, and per-component Cholesky factors with
//! log-parameterized diagonals. The same object serves as posterior model
//! (condition = data, event = parameters) and as likelihood surrogate
//! (condition = parameters, event = data); only the roles of the two vectors
//! swap.
//!
//! Both fitting modes train in standardized coordinates. The affine maps are
//! frozen the first time a fit sees data, so refits on accumulated data keep
//! a fixed coordinate system and warm starts stay meaningful.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{train, Activation, BatchLoss, Mlp, TrainConfig, TrainReport};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sample::{
    back_substitute_transposed, check_cols, forward_substitute, log_sum_exp, Standardizer,
};

pub(crate) const LN_2PI: f64 = 1.8378770664093453;
/// Log-diagonal clamp; keeps component scales within e^{±7} of the
/// standardized data scale.
const S_CLAMP: f64 = 7.0;

/// Static shape of the mixture head: `k` components over a `d`-dimensional
/// event. Raw parameter layout per network output row:
/// `[logits (k)] [means (k*d)] [per component: d log-diagonals, then the
/// strictly lower triangle row-major (d(d+1)/2 total)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdnShape {
    pub k: usize,
    pub d: usize,
}

impl MdnShape {
    pub fn out_dim(&self) -> usize {
        self.k + self.k * self.d + self.k * self.d * (self.d + 1) / 2
    }

    fn mean_start(&self, c: usize) -> usize {
        self.k + c * self.d
    }

    fn chol_start(&self, c: usize) -> usize {
        self.k + self.k * self.d + c * (self.d * (self.d + 1) / 2)
    }

    /// Lower-triangular factor of component `c`, diagonals exponentiated
    /// after clamping.
    fn chol_factor(&self, raw: &ArrayView1<f64>, c: usize) -> Array2<f64> {
        let d = self.d;
        let base = self.chol_start(c);
        let mut l = Array2::zeros((d, d));
        for i in 0..d {
            l[[i, i]] = raw[base + i].clamp(-S_CLAMP, S_CLAMP).exp();
        }
        let mut idx = base + d;
        for i in 1..d {
            for j in 0..i {
                l[[i, j]] = raw[idx];
                idx += 1;
            }
        }
        l
    }

    fn log_det_chol(&self, raw: &ArrayView1<f64>, c: usize) -> f64 {
        let base = self.chol_start(c);
        (0..self.d)
            .map(|i| raw[base + i].clamp(-S_CLAMP, S_CLAMP))
            .sum()
    }

    pub fn mixture_log_weights(&self, raw: &ArrayView1<f64>) -> Array1<f64> {
        let logits: Vec<f64> = raw.iter().take(self.k).cloned().collect();
        let lse = log_sum_exp(&logits);
        Array1::from_iter(logits.into_iter().map(|l| l - lse))
    }

    /// Mixture log density at a standardized event, with optional gradient
    /// with respect to the raw parameter row.
    ///
    /// The clamp on log-diagonals is treated as identity in the gradient so
    /// saturated components keep receiving a recovery signal.
    fn eval_std(
        &self,
        raw: &ArrayView1<f64>,
        z: &ArrayView1<f64>,
        want_grad: bool,
    ) -> (f64, Option<Array1<f64>>) {
        let (k, d) = (self.k, self.d);
        let log_w = self.mixture_log_weights(raw);
        let mut comp_logp = Vec::with_capacity(k);
        let mut comp_w = Vec::with_capacity(k);
        let mut comp_v = Vec::with_capacity(k);
        let mut comp_l = Vec::with_capacity(k);
        for c in 0..k {
            let l = self.chol_factor(raw, c);
            let mean = raw.slice(ndarray::s![self.mean_start(c)..self.mean_start(c) + d]);
            let u = z.to_owned() - &mean;
            let w = forward_substitute(&l.view(), &u.view());
            let logp = -0.5 * d as f64 * LN_2PI
                - self.log_det_chol(raw, c)
                - 0.5 * w.iter().map(|x| x * x).sum::<f64>();
            comp_logp.push(logp);
            if want_grad {
                let v = back_substitute_transposed(&l.view(), &w.view());
                comp_v.push(v);
                comp_w.push(w);
                comp_l.push(l);
            }
        }
        let joint: Vec<f64> = (0..k).map(|c| log_w[c] + comp_logp[c]).collect();
        let total = log_sum_exp(&joint);
        if !want_grad {
            return (total, None);
        }

        let mut grad = Array1::zeros(self.out_dim());
        let probs: Vec<f64> = (0..k).map(|c| log_w[c].exp()).collect();
        for c in 0..k {
            let r = (joint[c] - total).exp();
            grad[c] = r - probs[c];
            let v = &comp_v[c];
            let w = &comp_w[c];
            let l = &comp_l[c];
            let ms = self.mean_start(c);
            for i in 0..d {
                grad[ms + i] = r * v[i];
            }
            let base = self.chol_start(c);
            for i in 0..d {
                grad[base + i] = r * (v[i] * w[i] * l[[i, i]] - 1.0);
            }
            let mut idx = base + d;
            for i in 1..d {
                for j in 0..i {
                    grad[idx] = r * v[i] * w[j];
                    idx += 1;
                }
            }
        }
        (total, Some(grad))
    }

    pub fn log_prob_std(&self, raw: &ArrayView1<f64>, z: &ArrayView1<f64>) -> f64 {
        self.eval_std(raw, z, false).0
    }

    pub fn log_prob_grad_std(
        &self,
        raw: &ArrayView1<f64>,
        z: &ArrayView1<f64>,
    ) -> (f64, Array1<f64>) {
        let (lp, g) = self.eval_std(raw, z, true);
        (lp, g.expect("grad requested"))
    }

    /// Draws one standardized event from the mixture given a raw row.
    pub fn sample_std(&self, raw: &ArrayView1<f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
        let log_w = self.mixture_log_weights(raw);
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut comp = self.k - 1;
        for c in 0..self.k {
            acc += log_w[c].exp();
            if u < acc {
                comp = c;
                break;
            }
        }
        let l = self.chol_factor(raw, comp);
        let eps = Array1::from_iter((0..self.d).map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            e
        }));
        let mean = raw.slice(ndarray::s![self.mean_start(comp)..self.mean_start(comp) + self.d]);
        mean.to_owned() + l.dot(&eps)
    }
}

/// Negative log likelihood of fixed (standardized) events under the mixture.
pub struct MdnNllLoss<'a> {
    pub shape: MdnShape,
    pub events_std: ArrayView2<'a, f64>,
}

impl BatchLoss for MdnNllLoss<'_> {
    fn eval(&mut self, rows: &[usize], outputs: &ArrayView2<f64>) -> (f64, Array2<f64>) {
        let b = rows.len() as f64;
        let mut grad = Array2::zeros(outputs.raw_dim());
        let mut total = 0.0;
        for (i, &row) in rows.iter().enumerate() {
            let (lp, g) = self
                .shape
                .log_prob_grad_std(&outputs.row(i), &self.events_std.row(row));
            total -= lp;
            grad.row_mut(i).assign(&(-&g / b));
        }
        (total / b, grad)
    }
}

/// Atomic contrastive loss for proposal-corrected posterior fitting.
///
/// Each batch element is scored by a softmax over `m` atoms: its own event
/// plus `m - 1` others drawn from the batch without replacement, each
/// weighted by 1/prior. Atom draws are a pure function of the row set, so
/// repeated evaluation on the same batch (validation, finite differencing)
/// is deterministic.
pub struct AtomicLoss<'a> {
    pub shape: MdnShape,
    pub events_std: ArrayView2<'a, f64>,
    /// Prior log density at each event row, in original coordinates.
    pub log_prior: &'a [f64],
    pub m: usize,
    pub seed: u64,
}

impl AtomicLoss<'_> {
    fn atom_rng(&self, rows: &[usize]) -> ChaCha8Rng {
        // FNV-1a over the row indices.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &r in rows {
            h ^= r as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        rng_from_seed(derive_seed(self.seed, h))
    }
}

impl BatchLoss for AtomicLoss<'_> {
    fn eval(&mut self, rows: &[usize], outputs: &ArrayView2<f64>) -> (f64, Array2<f64>) {
        let b = rows.len();
        let m_eff = self.m.min(b);
        let mut rng = self.atom_rng(rows);
        let mut grad = Array2::zeros(outputs.raw_dim());
        let mut total = 0.0;
        for (i, &row) in rows.iter().enumerate() {
            // Atom 0 is the row's own event; the contrast set comes from the
            // rest of the batch.
            let mut atom_rows = Vec::with_capacity(m_eff);
            atom_rows.push(row);
            if m_eff > 1 {
                let picks = rand::seq::index::sample(&mut rng, b - 1, m_eff - 1);
                for p in picks {
                    let p = if p >= i { p + 1 } else { p };
                    atom_rows.push(rows[p]);
                }
            }
            let raw = outputs.row(i);
            let mut phis = Vec::with_capacity(m_eff);
            let mut grads = Vec::with_capacity(m_eff);
            for &a in &atom_rows {
                let (lp, g) = self.shape.log_prob_grad_std(&raw, &self.events_std.row(a));
                phis.push(lp - self.log_prior[a]);
                grads.push(g);
            }
            let lse = log_sum_exp(&phis);
            total += lse - phis[0];
            let mut g_row = grad.row_mut(i);
            for (a, g) in grads.iter().enumerate() {
                let s = (phis[a] - lse).exp();
                let coeff = s - if a == 0 { 1.0 } else { 0.0 };
                g_row.scaled_add(coeff, g);
            }
        }
        let bf = b as f64;
        grad.mapv_inplace(|v| v / bf);
        (total / bf, grad)
    }
}

/// Box constraint applied to samples in original coordinates, enforced by
/// rejection with a bounded attempt budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub bounds: Option<(Array1<f64>, Array1<f64>)>,
    /// Total attempts allowed = factor * requested draws.
    pub max_attempts_factor: usize,
}

impl TruncationPolicy {
    pub fn unbounded() -> Self {
        Self {
            bounds: None,
            max_attempts_factor: 100,
        }
    }

    pub fn boxed(lo: Array1<f64>, hi: Array1<f64>) -> Self {
        Self {
            bounds: Some((lo, hi)),
            max_attempts_factor: 100,
        }
    }

    pub fn accepts(&self, point: &ArrayView1<f64>) -> bool {
        match &self.bounds {
            None => true,
            Some((lo, hi)) => point
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(x, (l, h))| x >= l && x <= h),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdnConfig {
    pub components: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for MdnConfig {
    fn default() -> Self {
        Self {
            components: 5,
            hidden: vec![50, 50],
            activation: Activation::Tanh,
        }
    }
}

/// Conditional Gaussian mixture density network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mdn {
    shape: MdnShape,
    net: Mlp,
    cond_standardizer: Option<Standardizer>,
    event_standardizer: Option<Standardizer>,
}

impl Mdn {
    pub fn new(cond_dim: usize, event_dim: usize, cfg: &MdnConfig, seed: u64) -> Result<Self> {
        if cfg.components == 0 {
            return Err(Error::InvalidConfig("MDN needs at least one component".into()));
        }
        if cond_dim == 0 || event_dim == 0 {
            return Err(Error::InvalidConfig("MDN dims must be positive".into()));
        }
        let shape = MdnShape {
            k: cfg.components,
            d: event_dim,
        };
        let mut dims = vec![cond_dim];
        dims.extend_from_slice(&cfg.hidden);
        dims.push(shape.out_dim());
        let mut net = Mlp::new(&dims, cfg.activation, seed)?;
        // Spread the mean-head biases so components start apart; with zero
        // biases all components coincide and responsibilities tie.
        let mut rng = rng_from_seed(derive_seed(seed, 0x11EA));
        let bias = net.bias_mut(dims.len() - 2);
        for c in 0..shape.k {
            for i in 0..shape.d {
                bias[shape.k + c * shape.d + i] = rng.random_range(-1.0..1.0);
            }
        }
        Ok(Self {
            shape,
            net,
            cond_standardizer: None,
            event_standardizer: None,
        })
    }

    pub fn shape(&self) -> MdnShape {
        self.shape
    }

    pub fn cond_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn event_dim(&self) -> usize {
        self.shape.d
    }

    pub fn is_standardized(&self) -> bool {
        self.cond_standardizer.is_some()
    }

    /// Installs fixed standardizers. Fitting freezes whichever maps are in
    /// place, so call this before the first fit or not at all.
    pub fn set_standardizers(&mut self, cond: Standardizer, event: Standardizer) -> Result<()> {
        check_cols("Mdn cond standardizer", self.cond_dim(), cond.dim())?;
        check_cols("Mdn event standardizer", self.event_dim(), event.dim())?;
        self.cond_standardizer = Some(cond);
        self.event_standardizer = Some(event);
        Ok(())
    }

    fn ensure_standardizers(
        &mut self,
        conds: &ArrayView2<f64>,
        events: &ArrayView2<f64>,
    ) -> Result<()> {
        if self.cond_standardizer.is_none() {
            self.cond_standardizer = Some(Standardizer::fit(conds)?);
        }
        if self.event_standardizer.is_none() {
            self.event_standardizer = Some(Standardizer::fit(events)?);
        }
        Ok(())
    }

    fn check_fit_inputs(&self, conds: &ArrayView2<f64>, events: &ArrayView2<f64>) -> Result<()> {
        check_cols("Mdn fit conditions", self.cond_dim(), conds.ncols())?;
        check_cols("Mdn fit events", self.event_dim(), events.ncols())?;
        if conds.nrows() != events.nrows() {
            return Err(Error::DimensionMismatch {
                context: "Mdn fit rows",
                expected: conds.nrows(),
                got: events.nrows(),
            });
        }
        if conds.nrows() == 0 {
            return Err(Error::EmptySample("Mdn fit"));
        }
        Ok(())
    }

    /// Maximum likelihood fit: minimizes the mixture NLL of `events` given
    /// `conds`.
    pub fn fit_mle(
        &mut self,
        conds: &ArrayView2<f64>,
        events: &ArrayView2<f64>,
        tc: &TrainConfig,
    ) -> Result<TrainReport> {
        self.check_fit_inputs(conds, events)?;
        self.ensure_standardizers(conds, events)?;
        let cs = self.cond_standardizer.as_ref().unwrap();
        let es = self.event_standardizer.as_ref().unwrap();
        let conds_std = cs.transform(conds)?;
        let events_std = es.transform(events)?;
        let mut loss = MdnNllLoss {
            shape: self.shape,
            events_std: events_std.view(),
        };
        train(&mut self.net, &conds_std.view(), &mut loss, tc)
    }

    /// Atomic contrastive fit: each event is scored against `atoms - 1`
    /// prior-weighted contrast events from its batch. `log_prior` is
    /// evaluated at events in original coordinates.
    pub fn fit_atomic(
        &mut self,
        conds: &ArrayView2<f64>,
        events: &ArrayView2<f64>,
        log_prior: &dyn Fn(&ArrayView1<f64>) -> f64,
        atoms: usize,
        tc: &TrainConfig,
    ) -> Result<TrainReport> {
        self.check_fit_inputs(conds, events)?;
        if atoms < 2 {
            return Err(Error::InvalidConfig("atomic fit needs at least 2 atoms".into()));
        }
        if atoms > tc.batch_size {
            return Err(Error::InvalidConfig(format!(
                "atoms ({atoms}) must not exceed batch_size ({})",
                tc.batch_size
            )));
        }
        self.ensure_standardizers(conds, events)?;
        let cs = self.cond_standardizer.as_ref().unwrap();
        let es = self.event_standardizer.as_ref().unwrap();
        let conds_std = cs.transform(conds)?;
        let events_std = es.transform(events)?;
        let prior_vals: Vec<f64> = events.rows().into_iter().map(|r| log_prior(&r)).collect();
        let mut loss = AtomicLoss {
            shape: self.shape,
            events_std: events_std.view(),
            log_prior: &prior_vals,
            m: atoms,
            seed: derive_seed(tc.seed, 0xA70),
        };
        train(&mut self.net, &conds_std.view(), &mut loss, tc)
    }

    /// Log density of `event` given `cond`, in original coordinates.
    pub fn log_prob(&self, event: &ArrayView1<f64>, cond: &ArrayView1<f64>) -> Result<f64> {
        let (cs, es) = self.standardizers()?;
        let raw = self.net.forward(&cs.transform_row(cond)?.view())?;
        let z = es.transform_row(event)?;
        Ok(self.shape.log_prob_std(&raw.view(), &z.view()) + es.log_det_jacobian())
    }

    /// Draws `n` events given `cond`, rejecting draws outside the policy's
    /// box. Fails if the attempt budget (factor * n) runs out.
    pub fn sample(
        &self,
        cond: &ArrayView1<f64>,
        n: usize,
        policy: &TruncationPolicy,
        seed: u64,
    ) -> Result<Array2<f64>> {
        Ok(self.sample_counted(cond, n, policy, seed)?.0)
    }

    /// [`Mdn::sample`] plus the number of draws the policy rejected.
    pub fn sample_counted(
        &self,
        cond: &ArrayView1<f64>,
        n: usize,
        policy: &TruncationPolicy,
        seed: u64,
    ) -> Result<(Array2<f64>, usize)> {
        let (cs, es) = self.standardizers()?;
        let raw = self.net.forward(&cs.transform_row(cond)?.view())?;
        let mut rng = rng_from_seed(seed);
        let mut out = Array2::zeros((n, self.event_dim()));
        let max_attempts = self.attempt_budget(n, policy);
        let mut attempts = 0usize;
        let mut accepted = 0usize;
        while accepted < n {
            if attempts >= max_attempts {
                return Err(Error::RejectionExhausted {
                    attempts,
                    accepted,
                    requested: n,
                });
            }
            attempts += 1;
            let z = self.shape.sample_std(&raw.view(), &mut rng);
            let x = es.inverse_row(&z.view())?;
            if policy.accepts(&x.view()) {
                out.row_mut(accepted).assign(&x);
                accepted += 1;
            }
        }
        Ok((out, attempts - n))
    }

    fn attempt_budget(&self, n: usize, policy: &TruncationPolicy) -> usize {
        if policy.bounds.is_none() {
            usize::MAX
        } else {
            policy.max_attempts_factor.saturating_mul(n.max(1))
        }
    }

    fn standardizers(&self) -> Result<(&Standardizer, &Standardizer)> {
        match (&self.cond_standardizer, &self.event_standardizer) {
            (Some(c), Some(e)) => Ok((c, e)),
            _ => Err(Error::InvalidConfig(
                "Mdn used before fitting (standardizers unset)".into(),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn identity_standardizer(d: usize) -> Standardizer {
        Standardizer {
            mean: Array1::zeros(d),
            sd: Array1::ones(d),
        }
    }

    /// MDN with all-zero trunk so the raw output row equals the output-layer
    /// bias, which the test sets by hand.
    fn rigged_mdn(cond_dim: usize, event_dim: usize, k: usize, raw_bias: &[f64]) -> Mdn {
        let cfg = MdnConfig {
            components: k,
            hidden: vec![4],
            activation: Activation::Tanh,
        };
        let mut mdn = Mdn::new(cond_dim, event_dim, &cfg, 0).unwrap();
        let n_params = mdn.net.param_count();
        mdn.net.set_flat_params(&vec![0.0; n_params]).unwrap();
        let shape = mdn.shape();
        assert_eq!(raw_bias.len(), shape.out_dim());
        let last = mdn.net.num_layers() - 1;
        let bias = mdn.net.bias_mut(last);
        for (i, v) in raw_bias.iter().enumerate() {
            bias[i] = *v;
        }
        mdn.set_standardizers(identity_standardizer(cond_dim), identity_standardizer(event_dim))
            .unwrap();
        mdn
    }

    #[test]
    fn standard_normal_log_density() {
        // K=1, d=1, mean 0, log-sd 0: log N(0; 0, 1) = -log sqrt(2 pi).
        let mdn = rigged_mdn(1, 1, 1, &[0.0, 0.0, 0.0]);
        let lp = mdn
            .log_prob(&array![0.0].view(), &array![0.3].view())
            .unwrap();
        assert_abs_diff_eq!(lp, -0.9189385332046727, epsilon = 1e-14);
        let lp1 = mdn
            .log_prob(&array![1.0].view(), &array![0.3].view())
            .unwrap();
        assert_abs_diff_eq!(lp1, -0.9189385332046727 - 0.5, epsilon = 1e-14);
    }

    #[test]
    fn two_component_mixture_log_density() {
        // Equal weights, both means 0, sds 0.1 and 1:
        // p(0) = 0.5*(1/(0.1 sqrt(2pi))) + 0.5*(1/sqrt(2pi)) = 5.5/sqrt(2pi).
        let ln_01 = 0.1f64.ln();
        let mdn = rigged_mdn(1, 1, 2, &[0.0, 0.0, 0.0, 0.0, ln_01, 0.0]);
        let lp = mdn
            .log_prob(&array![0.0].view(), &array![0.0].view())
            .unwrap();
        assert_abs_diff_eq!(lp, 0.7858095590337525, epsilon = 1e-12);
    }

    #[test]
    fn full_covariance_log_density() {
        // K=1, d=2, L = [[1,0],[0.5,1]] so Sigma = [[1,0.5],[0.5,1.25]],
        // det = 1. At x = (0.3, -0.7): quad = 0.8125,
        // log p = -ln(2pi) - 0.40625.
        let mdn = rigged_mdn(1, 2, 1, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
        let lp = mdn
            .log_prob(&array![0.3, -0.7].view(), &array![0.0].view())
            .unwrap();
        assert_abs_diff_eq!(lp, -1.8378770664093453 - 0.40625, epsilon = 1e-12);
    }

    #[test]
    fn log_prob_accounts_for_standardization() {
        // Event standardizer with sd 2: density must shrink by log 2.
        let mut mdn = rigged_mdn(1, 1, 1, &[0.0, 0.0, 0.0]);
        mdn.set_standardizers(
            identity_standardizer(1),
            Standardizer {
                mean: array![0.0],
                sd: array![2.0],
            },
        )
        .unwrap();
        let lp = mdn
            .log_prob(&array![0.0].view(), &array![0.0].view())
            .unwrap();
        assert_abs_diff_eq!(lp, -0.9189385332046727 - std::f64::consts::LN_2, epsilon = 1e-14);
    }

    #[test]
    fn mixture_log_weights_normalize() {
        let shape = MdnShape { k: 3, d: 1 };
        let raw = array![1.0, -2.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let lw = shape.mixture_log_weights(&raw.view());
        let total: f64 = lw.iter().map(|l| l.exp()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sampling_matches_moments() {
        // K=1, d=2 with a correlated factor; check sample mean and
        // covariance against the implied Sigma.
        let mdn = rigged_mdn(1, 2, 1, &[0.0, 1.0, -2.0, 0.0, 0.0, 0.5]);
        let n = 40_000;
        let xs = mdn
            .sample(&array![0.0].view(), n, &TruncationPolicy::unbounded(), 99)
            .unwrap();
        let mean0 = xs.column(0).mean().unwrap();
        let mean1 = xs.column(1).mean().unwrap();
        assert_abs_diff_eq!(mean0, 1.0, epsilon = 0.02);
        assert_abs_diff_eq!(mean1, -2.0, epsilon = 0.02);
        let mut cov = [[0.0; 2]; 2];
        for row in xs.rows() {
            let a = row[0] - mean0;
            let b = row[1] - mean1;
            cov[0][0] += a * a;
            cov[0][1] += a * b;
            cov[1][1] += b * b;
        }
        let nf = n as f64;
        // Sigma = [[1, 0.5], [0.5, 1.25]].
        assert_abs_diff_eq!(cov[0][0] / nf, 1.0, epsilon = 0.05);
        assert_abs_diff_eq!(cov[0][1] / nf, 0.5, epsilon = 0.05);
        assert_abs_diff_eq!(cov[1][1] / nf, 1.25, epsilon = 0.05);
    }

    #[test]
    fn truncation_rejects_out_of_box() {
        let mdn = rigged_mdn(1, 1, 1, &[0.0, 0.0, 0.0]);
        let policy = TruncationPolicy::boxed(array![-0.5], array![0.5]);
        let xs = mdn.sample(&array![0.0].view(), 500, &policy, 7).unwrap();
        assert!(xs.iter().all(|v| (-0.5..=0.5).contains(v)));
    }

    #[test]
    fn truncation_budget_exhausts() {
        // Component far outside a tiny box: acceptance is essentially zero.
        let mdn = rigged_mdn(1, 1, 1, &[0.0, 50.0, -3.0]);
        let policy = TruncationPolicy::boxed(array![-0.1], array![0.1]);
        let err = mdn.sample(&array![0.0].view(), 10, &policy, 7).unwrap_err();
        match err {
            Error::RejectionExhausted { requested, .. } => assert_eq!(requested, 10),
            other => panic!("expected RejectionExhausted, got {other}"),
        }
    }

    #[test]
    fn gradcheck_nll_loss() {
        // Finite differences through trunk + mixture head, full covariance.
        let cfg = MdnConfig {
            components: 3,
            hidden: vec![6],
            activation: Activation::Tanh,
        };
        let mdn = Mdn::new(3, 2, &cfg, 21).unwrap();
        let mut rng = rng_from_seed(5);
        let conds = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let events = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
        let mut loss = MdnNllLoss {
            shape: mdn.shape(),
            events_std: events.view(),
        };
        gradcheck(&mdn.net, &conds.view(), &mut loss, 1e-4);
    }

    #[test]
    fn gradcheck_atomic_loss() {
        let cfg = MdnConfig {
            components: 2,
            hidden: vec![5],
            activation: Activation::Tanh,
        };
        let mdn = Mdn::new(2, 2, &cfg, 3).unwrap();
        let mut rng = rng_from_seed(8);
        let conds = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
        let events = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
        let log_prior: Vec<f64> = (0..6).map(|i| -0.1 * i as f64).collect();
        let mut loss = AtomicLoss {
            shape: mdn.shape(),
            events_std: events.view(),
            log_prior: &log_prior,
            m: 4,
            seed: 17,
        };
        gradcheck(&mdn.net, &conds.view(), &mut loss, 1e-4);
    }

    #[test]
    fn atomic_loss_is_deterministic_per_batch() {
        let cfg = MdnConfig::default();
        let mdn = Mdn::new(2, 1, &cfg, 3).unwrap();
        let mut rng = rng_from_seed(8);
        let conds = Array2::from_shape_fn((8, 2), |_| rng.random_range(-1.0..1.0));
        let events = Array2::from_shape_fn((8, 1), |_| rng.random_range(-1.0..1.0));
        let log_prior = vec![0.0; 8];
        let mut loss = AtomicLoss {
            shape: mdn.shape(),
            events_std: events.view(),
            log_prior: &log_prior,
            m: 5,
            seed: 1,
        };
        let rows: Vec<usize> = (0..8).collect();
        let out = mdn.net.forward_batch(&conds.view()).unwrap();
        let (l1, g1) = loss.eval(&rows, &out.view());
        let (l2, g2) = loss.eval(&rows, &out.view());
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
        assert!(l1 >= 0.0, "atomic loss is a -log softmax, so nonnegative");
    }

    #[test]
    fn fit_recovers_conditional_mean() {
        // Event = 2 * cond + noise(0.1): after MLE the conditional density
        // should put its mass near 2c.
        let mut rng = rng_from_seed(10);
        let n = 600;
        let conds = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
        let events = Array2::from_shape_fn((n, 1), |(i, _)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            2.0 * conds[[i, 0]] + 0.1 * e
        });
        let cfg = MdnConfig {
            components: 2,
            hidden: vec![20],
            activation: Activation::Tanh,
        };
        let mut mdn = Mdn::new(1, 1, &cfg, 4).unwrap();
        let tc = TrainConfig {
            max_epochs: 200,
            ..TrainConfig::default()
        };
        let report = mdn.fit_mle(&conds.view(), &events.view(), &tc).unwrap();
        assert!(!report.diverged);
        let xs = mdn
            .sample(&array![0.5].view(), 2000, &TruncationPolicy::unbounded(), 3)
            .unwrap();
        let m = xs.column(0).mean().unwrap();
        assert_abs_diff_eq!(m, 1.0, epsilon = 0.1);
    }

    #[test]
    fn fit_reaches_near_analytic_density() {
        // cond ~ U(-1,1), event = cond + noise(0.1): the true conditional
        // log density at the mean is log(1/(0.1 sqrt(2 pi))) ~ 1.38, so a
        // decent fit clears 0.5 held-out.
        let mut rng = rng_from_seed(21);
        let n = 1_200;
        let conds = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
        let events = Array2::from_shape_fn((n, 1), |(i, _)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            conds[[i, 0]] + 0.1 * e
        });
        let cfg = MdnConfig {
            components: 2,
            hidden: vec![20],
            activation: Activation::Tanh,
        };
        let mut mdn = Mdn::new(1, 1, &cfg, 6).unwrap();
        let tc = TrainConfig {
            max_epochs: 300,
            ..TrainConfig::default()
        };
        mdn.fit_mle(&conds.view(), &events.view(), &tc).unwrap();
        let mut held = 0.0;
        let m = 500;
        for _ in 0..m {
            let c = rng.random_range(-1.0..1.0);
            let e: f64 = StandardNormal.sample(&mut rng);
            let x = c + 0.1 * e;
            held += mdn.log_prob(&array![x].view(), &array![c].view()).unwrap();
        }
        let avg = held / m as f64;
        assert!(avg >= 0.5, "held-out mean log_prob = {avg}");
    }

    #[test]
    fn repeated_pair_pulls_a_component_mean_in() {
        // MLE on one repeated pair drives some mixture mean toward the
        // event value.
        let conds = Array2::from_elem((64, 1), 0.3);
        let events = Array2::from_elem((64, 1), -0.7);
        let cfg = MdnConfig {
            components: 2,
            hidden: vec![8],
            activation: Activation::Tanh,
        };
        let mut mdn = Mdn::new(1, 1, &cfg, 9).unwrap();
        // Identity standardizers: a constant column cannot be fit.
        mdn.set_standardizers(identity_standardizer(1), identity_standardizer(1))
            .unwrap();
        let mean_dev = |mdn: &Mdn| -> f64 {
            let xs = mdn
                .sample(&array![0.3].view(), 400, &TruncationPolicy::unbounded(), 8)
                .unwrap();
            xs.column(0).iter().map(|v| (v + 0.7).abs()).sum::<f64>() / 400.0
        };
        let before = mean_dev(&mdn);
        // One batch per epoch: epochs = optimizer steps, so give it plenty.
        let tc = TrainConfig {
            max_epochs: 2_000,
            val_fraction: 0.0,
            step_size: 3e-3,
            ..TrainConfig::default()
        };
        mdn.fit_mle(&conds.view(), &events.view(), &tc).unwrap();
        let after = mean_dev(&mdn);
        assert!(after < before, "mean distance to event: {before} -> {after}");
        assert!(after < 0.2, "sampled mass should gather near the event, got {after}");
    }

    #[test]
    fn fitting_improves_training_log_prob() {
        let mut rng = rng_from_seed(15);
        let conds = Array2::from_shape_fn((300, 1), |_| rng.random_range(-1.0..1.0));
        let events = Array2::from_shape_fn((300, 1), |(i, _)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            -conds[[i, 0]] + 0.3 * e
        });
        let avg_log_prob = |mdn: &Mdn| -> f64 {
            let mut total = 0.0;
            for i in 0..conds.nrows() {
                total += mdn
                    .log_prob(&events.row(i), &conds.row(i))
                    .unwrap();
            }
            total / conds.nrows() as f64
        };
        let mut mdn = Mdn::new(1, 1, &MdnConfig::default(), 12).unwrap();
        mdn.set_standardizers(
            Standardizer::fit(&conds.view()).unwrap(),
            Standardizer::fit(&events.view()).unwrap(),
        )
        .unwrap();
        let before = avg_log_prob(&mdn);
        let tc = TrainConfig {
            max_epochs: 100,
            ..TrainConfig::default()
        };
        mdn.fit_mle(&conds.view(), &events.view(), &tc).unwrap();
        let after = avg_log_prob(&mdn);
        assert!(after > before, "training log_prob: {before} -> {after}");
    }

    #[test]
    fn fit_freezes_standardizers() {
        let mut rng = rng_from_seed(2);
        let conds = Array2::from_shape_fn((50, 1), |_| rng.random_range(-1.0..1.0));
        let events = Array2::from_shape_fn((50, 1), |_| rng.random_range(-1.0..1.0));
        let mut mdn = Mdn::new(1, 1, &MdnConfig::default(), 1).unwrap();
        let tc = TrainConfig {
            max_epochs: 2,
            ..TrainConfig::default()
        };
        mdn.fit_mle(&conds.view(), &events.view(), &tc).unwrap();
        let frozen = mdn.event_standardizer.clone().unwrap();
        // Refit on shifted data: maps must not move.
        let shifted = events.mapv(|v| v + 100.0);
        mdn.fit_mle(&conds.view(), &shifted.view(), &tc).unwrap();
        assert_eq!(mdn.event_standardizer.as_ref().unwrap(), &frozen);
    }

    #[test]
    fn atomic_rejects_bad_atom_counts() {
        let mut mdn = Mdn::new(1, 1, &MdnConfig::default(), 1).unwrap();
        let conds = Array2::zeros((10, 1));
        let events = Array2::zeros((10, 1));
        let flat = |_: &ArrayView1<f64>| 0.0;
        let tc = TrainConfig {
            batch_size: 5,
            ..TrainConfig::default()
        };
        assert!(mdn
            .fit_atomic(&conds.view(), &events.view(), &flat, 1, &tc)
            .is_err());
        assert!(mdn
            .fit_atomic(&conds.view(), &events.view(), &flat, 6, &tc)
            .is_err());
    }

    #[test]
    fn serialization_roundtrip_preserves_density() {
        let mut rng = rng_from_seed(2);
        let conds = Array2::from_shape_fn((60, 2), |_| rng.random_range(-1.0..1.0));
        let events = Array2::from_shape_fn((60, 1), |_| rng.random_range(-1.0..1.0));
        let mut mdn = Mdn::new(2, 1, &MdnConfig::default(), 1).unwrap();
        let tc = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        mdn.fit_mle(&conds.view(), &events.view(), &tc).unwrap();
        let back = Mdn::from_json(&mdn.to_json().unwrap()).unwrap();
        let e = array![0.2];
        let c = array![0.1, -0.3];
        assert_eq!(
            mdn.log_prob(&e.view(), &c.view()).unwrap(),
            back.log_prob(&e.view(), &c.view()).unwrap()
        );
    }

    /// Finite-difference check of dLoss/dParams through `loss`.
    fn gradcheck(net: &Mlp, inputs: &ArrayView2<f64>, loss: &mut dyn BatchLoss, rel_tol: f64) {
        let rows: Vec<usize> = (0..inputs.nrows()).collect();
        let out = net.forward_batch(inputs).unwrap();
        let (_, upstream) = loss.eval(&rows, &out.view());
        let analytic = net.backward_batch(inputs, &upstream.view()).unwrap().flat();
        let h = 1e-5;
        let base = net.flat_params();
        let mut probe = net.clone();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_flat_params(&p).unwrap();
            let up = loss
                .eval(&rows, &probe.forward_batch(inputs).unwrap().view())
                .0;
            p[i] = base[i] - h;
            probe.set_flat_params(&p).unwrap();
            let down = loss
                .eval(&rows, &probe.forward_batch(inputs).unwrap().view())
                .0;
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic[i] - numeric).abs() / scale < rel_tol,
                "param {i}: analytic {} vs numeric {numeric}",
                analytic[i]
            );
        }
    }
}
