//! Dense feed-forward networks trained with Adam.
//!
//! Everything here is deliberately small: fully connected layers, tanh or
//! ReLU hidden activations, a linear output layer, and a training loop with
//! shuffled mini-batches and early stopping on a held-out validation split.
//! Losses plug in through [`BatchLoss`], which receives raw network outputs
//! and returns the mean batch loss together with its gradient with respect to
//! those outputs; the chain rule through the layers lives in
//! [`Mlp::backward_batch`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sample::check_cols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Multi-layer perceptron. `dims` lists layer widths from input to output;
/// hidden layers use `activation`, the output layer is linear.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    /// weights[l] has shape (dims[l+1], dims[l]).
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
}

/// Per-parameter gradients, same shapes as the network's weights and biases.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// Xavier-uniform initialization: U(-a, a) with a = sqrt(6/(fan_in+fan_out)),
    /// biases zero.
    pub fn new(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "Mlp needs at least input and output dims".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("Mlp layer width must be positive".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-a..a));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Array1<f64> {
        &mut self.biases[layer]
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn forward(&self, input: &ArrayView1<f64>) -> Result<Array1<f64>> {
        let batch = input
            .to_owned()
            .insert_axis(Axis(0));
        let out = self.forward_batch(&batch.view())?;
        Ok(out.row(0).to_owned())
    }

    /// Forward pass for a batch, one row per sample.
    pub fn forward_batch(&self, inputs: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(inputs)?.pop().expect("nonempty trace"))
    }

    /// Activations for every layer including the input; the last entry is the
    /// network output.
    fn forward_trace(&self, inputs: &ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        check_cols("Mlp::forward", self.input_dim(), inputs.ncols())?;
        let last = self.weights.len() - 1;
        let mut trace = vec![inputs.to_owned()];
        for l in 0..self.weights.len() {
            let mut z = trace[l].dot(&self.weights[l].t());
            z += &self.biases[l];
            if l < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            trace.push(z);
        }
        Ok(trace)
    }

    /// Backpropagates `upstream` (dLoss/dOutput, one row per sample, already
    /// carrying any 1/batch factor) to per-parameter gradients summed over the
    /// batch.
    pub fn backward_batch(
        &self,
        inputs: &ArrayView2<f64>,
        upstream: &ArrayView2<f64>,
    ) -> Result<Gradients> {
        check_cols("Mlp::backward", self.output_dim(), upstream.ncols())?;
        if inputs.nrows() != upstream.nrows() {
            return Err(Error::DimensionMismatch {
                context: "Mlp::backward rows",
                expected: inputs.nrows(),
                got: upstream.nrows(),
            });
        }
        let trace = self.forward_trace(inputs)?;
        let mut grads = Gradients {
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        };
        let mut delta = upstream.to_owned();
        for l in (0..self.weights.len()).rev() {
            grads.weights[l] = delta.t().dot(&trace[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l]);
                // trace[l] holds the post-activation output of layer l-1.
                prev.zip_mut_with(&trace[l], |d, &a| {
                    *d *= self.activation.derivative_from_output(a)
                });
                delta = prev;
            }
        }
        Ok(grads)
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters flattened layer by layer (weights row-major, then biases).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.weights.len() {
            out.extend(self.weights[l].iter());
            out.extend(self.biases[l].iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "Mlp::set_flat_params",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter();
        for l in 0..self.weights.len() {
            for w in self.weights[l].iter_mut() {
                *w = *it.next().unwrap();
            }
            for b in self.biases[l].iter_mut() {
                *b = *it.next().unwrap();
            }
        }
        Ok(())
    }

    fn params_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            out.extend(self.weights[l].iter());
            out.extend(self.biases[l].iter());
        }
        out
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    step_size: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp, step_size: f64) -> Self {
        Self {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// One Adam update with bias-corrected moment estimates.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for l in 0..net.weights.len() {
            azip_update(
                net.weights[l].iter_mut(),
                self.m_w[l].iter_mut(),
                self.v_w[l].iter_mut(),
                grads.weights[l].iter(),
                [self.beta1, self.beta2, c1, c2, self.step_size, self.epsilon],
            );
            azip_update(
                net.biases[l].iter_mut(),
                self.m_b[l].iter_mut(),
                self.v_b[l].iter_mut(),
                grads.biases[l].iter(),
                [self.beta1, self.beta2, c1, c2, self.step_size, self.epsilon],
            );
        }
    }
}

fn azip_update<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    ms: impl Iterator<Item = &'a mut f64>,
    vs: impl Iterator<Item = &'a mut f64>,
    gs: impl Iterator<Item = &'a f64>,
    [beta1, beta2, c1, c2, step_size, epsilon]: [f64; 6],
) {
    for (((p, m), v), g) in params.zip(ms).zip(vs).zip(gs) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= step_size * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// A training objective evaluated on raw network outputs.
///
/// `rows` indexes into the full dataset the loss was built from, so
/// implementations can look up per-row targets; `outputs` holds the network
/// outputs for exactly those rows. Returns the mean loss over the batch and
/// its gradient with respect to `outputs` (including the 1/batch factor).
pub trait BatchLoss {
    fn eval(&mut self, rows: &[usize], outputs: &ArrayView2<f64>) -> (f64, Array2<f64>);
}

/// Mean squared error against fixed targets, summed over output dimensions.
pub struct MseLoss<'a> {
    pub targets: ArrayView2<'a, f64>,
}

impl BatchLoss for MseLoss<'_> {
    fn eval(&mut self, rows: &[usize], outputs: &ArrayView2<f64>) -> (f64, Array2<f64>) {
        let b = rows.len() as f64;
        let mut grad = Array2::zeros(outputs.raw_dim());
        let mut total = 0.0;
        for (i, &row) in rows.iter().enumerate() {
            for j in 0..outputs.ncols() {
                let diff = outputs[[i, j]] - self.targets[[row, j]];
                total += diff * diff;
                grad[[i, j]] = 2.0 * diff / b;
            }
        }
        (total / b, grad)
    }
}

/// Binary cross-entropy on a single logit output.
pub struct LogisticLoss<'a> {
    pub labels: &'a [f64],
}

impl BatchLoss for LogisticLoss<'_> {
    fn eval(&mut self, rows: &[usize], outputs: &ArrayView2<f64>) -> (f64, Array2<f64>) {
        let b = rows.len() as f64;
        let mut grad = Array2::zeros(outputs.raw_dim());
        let mut total = 0.0;
        for (i, &row) in rows.iter().enumerate() {
            let z = outputs[[i, 0]];
            let y = self.labels[row];
            total += softplus(z) - y * z;
            grad[[i, 0]] = (sigmoid(z) - y) / b;
        }
        (total / b, grad)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Fraction of rows held out for early stopping, taken from the end of a
    /// seeded shuffle. Zero disables validation and early stopping.
    pub val_fraction: f64,
    /// Number of consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            max_epochs: 500,
            val_fraction: 0.1,
            patience: 20,
            step_size: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self, n_rows: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidConfig("val_fraction must be in [0, 1)".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidConfig("step_size must be positive".into()));
        }
        if n_rows == 0 {
            return Err(Error::EmptySample("train"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Best validation loss seen (final training loss when validation is off).
    pub val_loss: f64,
    pub epochs_run: usize,
    pub diverged: bool,
}

/// Trains `net` in place and leaves it at the best-validation snapshot.
///
/// Rows are shuffled once to carve off the validation split, then reshuffled
/// every epoch for mini-batching. A non-finite loss or parameter aborts
/// training, restores the best snapshot, and sets the `diverged` flag; the
/// caller decides whether that is fatal.
pub fn train(
    net: &mut Mlp,
    inputs: &ArrayView2<f64>,
    loss: &mut dyn BatchLoss,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate(inputs.nrows())?;
    let n = inputs.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0xBA7C));
    order.shuffle(&mut rng);

    let n_val = if cfg.val_fraction > 0.0 && n >= 2 {
        ((cfg.val_fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let (train_rows, val_rows) = order.split_at(n - n_val);
    let mut train_rows = train_rows.to_vec();

    let eval_rows = |net: &Mlp, loss: &mut dyn BatchLoss, rows: &[usize]| -> Result<f64> {
        let batch = gather_rows(inputs, rows);
        let out = net.forward_batch(&batch.view())?;
        Ok(loss.eval(rows, &out.view()).0)
    };

    let mut adam = AdamState::new(net, cfg.step_size);
    let mut best_params = net.flat_params();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0usize;
    let mut epochs_run = 0usize;
    let mut diverged = false;

    'outer: for _epoch in 0..cfg.max_epochs {
        train_rows.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in train_rows.chunks(cfg.batch_size) {
            let batch = gather_rows(inputs, chunk);
            let out = net.forward_batch(&batch.view())?;
            let (value, upstream) = loss.eval(chunk, &out.view());
            if !value.is_finite() {
                diverged = true;
                break 'outer;
            }
            let grads = net.backward_batch(&batch.view(), &upstream.view())?;
            adam.step(net, &grads);
            if !net.params_finite() {
                diverged = true;
                break 'outer;
            }
            epoch_loss += value * chunk.len() as f64;
            seen += chunk.len();
        }
        epochs_run += 1;
        let epoch_mean = epoch_loss / seen as f64;

        if n_val > 0 {
            let val = eval_rows(net, loss, val_rows)?;
            if !val.is_finite() {
                diverged = true;
                break;
            }
            if val < best_loss {
                best_loss = val;
                best_params = net.flat_params();
                stale = 0;
            } else {
                stale += 1;
                if stale > cfg.patience {
                    break;
                }
            }
        } else {
            best_loss = epoch_mean;
            best_params = net.flat_params();
        }
    }

    net.set_flat_params(&best_params)?;
    if best_loss.is_infinite() && n_val > 0 {
        // Diverged before completing a single validation pass.
        best_loss = f64::NAN;
    }
    Ok(TrainReport {
        val_loss: best_loss,
        epochs_run,
        diverged,
    })
}

pub(crate) fn gather_rows(data: &ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), data.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&data.row(r));
    }
    out
}

/// Numerically stable log(1 + exp(x)).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
