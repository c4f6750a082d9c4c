//! Two-hidden-layer log-sigmoid network and its full-batch trainer.
//!
//! Forward pass: a^i = logsig(w^i a^(i-1) + b^i) for i = 1..3, a^0 = input.
//! Training is gradient descent with momentum and an adaptive learning
//! rate: a candidate step is rejected (and the rate lowered) when it
//! would raise the MSE by more than `max_perf_inc`, otherwise applied,
//! raising the rate after genuine improvement.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{AveragingMode, Normalizer, Orientation};

/// Network shape plus the initialization seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub output_dim: usize,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 {
            return Err(Error::Config("input layer must have at least 1 node".into()));
        }
        if self.hidden[0] < 1 || self.hidden[1] < 1 {
            return Err(Error::Config("hidden layers must have at least 1 node".into()));
        }
        if self.output_dim < 2 {
            return Err(Error::Config("output layer must have at least 2 nodes".into()));
        }
        Ok(())
    }
}

/// One affine layer: weights row-major (out_dim x in_dim) plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

/// Weights and biases of the three layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub(crate) layers: [Layer; 3],
}

impl NetworkParams {
    /// Layer widths as (input, hidden1, hidden2, output).
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.layers[0].in_dim,
            self.layers[0].out_dim,
            self.layers[1].out_dim,
            self.layers[2].out_dim,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].out_dim
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters in file order: per layer, weights row-major then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Reads one parameter by its `flatten` index.
    pub fn get_param(&self, mut index: usize) -> f64 {
        for l in &self.layers {
            if index < l.weights.len() {
                return l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Writes one parameter by its `flatten` index.
    pub fn set_param(&mut self, mut index: usize, value: f64) {
        for l in &mut self.layers {
            if index < l.weights.len() {
                l.weights[index] = value;
                return;
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                l.bias[index] = value;
                return;
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn zeros_like(&self) -> NetworkParams {
        let layers = self.layers.clone().map(|l| Layer {
            in_dim: l.in_dim,
            out_dim: l.out_dim,
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.bias.len()],
        });
        NetworkParams { layers }
    }

    fn zero_in_place(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    /// delta = mc * prev - (1 - mc) * lr * grad, elementwise.
    fn momentum_step(prev: &NetworkParams, grad: &NetworkParams, mc: f64, lr: f64) -> NetworkParams {
        let mut out = grad.zeros_like();
        for i in 0..3 {
            for (o, (p, g)) in out.layers[i]
                .weights
                .iter_mut()
                .zip(prev.layers[i].weights.iter().zip(&grad.layers[i].weights))
            {
                *o = mc * p - (1.0 - mc) * lr * g;
            }
            for (o, (p, g)) in out.layers[i]
                .bias
                .iter_mut()
                .zip(prev.layers[i].bias.iter().zip(&grad.layers[i].bias))
            {
                *o = mc * p - (1.0 - mc) * lr * g;
            }
        }
        out
    }

    fn added(&self, delta: &NetworkParams) -> NetworkParams {
        let mut out = self.clone();
        for i in 0..3 {
            for (o, d) in out.layers[i].weights.iter_mut().zip(&delta.layers[i].weights) {
                *o += d;
            }
            for (o, d) in out.layers[i].bias.iter_mut().zip(&delta.layers[i].bias) {
                *o += d;
            }
        }
        out
    }
}

/// Seeded initialization: weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)],
/// biases zero. Same seed, same parameters, bit for bit.
pub fn init_params(cfg: &NetworkConfig) -> Result<NetworkParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = [cfg.input_dim, cfg.hidden[0], cfg.hidden[1], cfg.output_dim];
    let mut layers = Vec::with_capacity(3);
    for i in 0..3 {
        let (fan_in, fan_out) = (dims[i], dims[i + 1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        let mut weights = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_out * fan_in {
            let u: f64 = rng.gen();
            weights.push((2.0 * u - 1.0) * scale);
        }
        layers.push(Layer { in_dim: fan_in, out_dim: fan_out, weights, bias: vec![0.0; fan_out] });
    }
    let layers: [Layer; 3] = layers.try_into().expect("three layers");
    Ok(NetworkParams { layers })
}

/// Numerically stable log-sigmoid 1 / (1 + e^(-x)).
pub fn logsig(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-layer activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub hidden1: Vec<f64>,
    pub hidden2: Vec<f64>,
    pub output: Vec<f64>,
}

fn affine_logsig(layer: &Layer, input: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for j in 0..layer.out_dim {
        let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
        let mut z = layer.bias[j];
        for (w, x) in row.iter().zip(input) {
            z += w * x;
        }
        out.push(logsig(z));
    }
}

fn check_input(params: &NetworkParams, input: &[f64]) -> Result<()> {
    if input.len() != params.input_dim() {
        return Err(Error::Dimension { expected: params.input_dim(), actual: input.len() });
    }
    Ok(())
}

/// Full forward pass; the input must have the network's input width.
pub fn forward(params: &NetworkParams, input: &[f64]) -> Result<Activations> {
    check_input(params, input)?;
    let mut a1 = Vec::new();
    let mut a2 = Vec::new();
    let mut a3 = Vec::new();
    affine_logsig(&params.layers[0], input, &mut a1);
    affine_logsig(&params.layers[1], &a1, &mut a2);
    affine_logsig(&params.layers[2], &a2, &mut a3);
    Ok(Activations { hidden1: a1, hidden2: a2, output: a3 })
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted class: argmax of the output layer, lowest index on ties.
pub fn classify(params: &NetworkParams, input: &[f64]) -> Result<usize> {
    Ok(argmax(&forward(params, input)?.output))
}

fn check_batch(params: &NetworkParams, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if inputs.len() != targets.len() {
        return Err(Error::Dimension { expected: inputs.len(), actual: targets.len() });
    }
    let (d, n) = (params.input_dim(), params.output_dim());
    for x in inputs {
        if x.len() != d {
            return Err(Error::Dimension { expected: d, actual: x.len() });
        }
    }
    for t in targets {
        if t.len() != n {
            return Err(Error::Dimension { expected: n, actual: t.len() });
        }
    }
    Ok(())
}

/// Mean over all samples and all output units of (target - output)^2.
pub fn batch_mse(params: &NetworkParams, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    check_batch(params, inputs, targets)?;
    let n = params.output_dim();
    let mut a1 = Vec::new();
    let mut a2 = Vec::new();
    let mut a3 = Vec::new();
    let mut sum = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        affine_logsig(&params.layers[0], x, &mut a1);
        affine_logsig(&params.layers[1], &a1, &mut a2);
        affine_logsig(&params.layers[2], &a2, &mut a3);
        for (tj, yj) in t.iter().zip(&a3) {
            let e = tj - yj;
            sum += e * e;
        }
    }
    Ok(sum / (inputs.len() * n) as f64)
}

/// Backpropagation through the stored activations, plus the MSE at the
/// current parameters from the same pass. Samples are accumulated in
/// slice order, so the result is deterministic.
fn grad_and_mse(
    params: &NetworkParams,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(NetworkParams, f64)> {
    check_batch(params, inputs, targets)?;
    let (d, h1, h2, n) = params.dims();
    let denom = (inputs.len() * n) as f64;
    let mut grad = params.zeros_like();
    let mut a1 = Vec::with_capacity(h1);
    let mut a2 = Vec::with_capacity(h2);
    let mut a3 = Vec::with_capacity(n);
    let mut d1 = vec![0.0; h1];
    let mut d2 = vec![0.0; h2];
    let mut d3 = vec![0.0; n];
    let mut sq = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        affine_logsig(&params.layers[0], x, &mut a1);
        affine_logsig(&params.layers[1], &a1, &mut a2);
        affine_logsig(&params.layers[2], &a2, &mut a3);
        // dE/dy = -2 (t - y) / (samples * n); chain through y (1 - y)
        for j in 0..n {
            let e = t[j] - a3[j];
            sq += e * e;
            d3[j] = (-2.0 * e / denom) * a3[j] * (1.0 - a3[j]);
        }
        {
            let g3 = &mut grad.layers[2];
            for j in 0..n {
                let row = &mut g3.weights[j * h2..(j + 1) * h2];
                for k in 0..h2 {
                    row[k] += d3[j] * a2[k];
                }
                g3.bias[j] += d3[j];
            }
        }
        let w3 = &params.layers[2].weights;
        for k in 0..h2 {
            let mut s = 0.0;
            for j in 0..n {
                s += d3[j] * w3[j * h2 + k];
            }
            d2[k] = s * a2[k] * (1.0 - a2[k]);
        }
        {
            let g2 = &mut grad.layers[1];
            for k in 0..h2 {
                let row = &mut g2.weights[k * h1..(k + 1) * h1];
                for m in 0..h1 {
                    row[m] += d2[k] * a1[m];
                }
                g2.bias[k] += d2[k];
            }
        }
        let w2 = &params.layers[1].weights;
        for m in 0..h1 {
            let mut s = 0.0;
            for k in 0..h2 {
                s += d2[k] * w2[k * h1 + m];
            }
            d1[m] = s * a1[m] * (1.0 - a1[m]);
        }
        {
            let g1 = &mut grad.layers[0];
            for m in 0..h1 {
                let row = &mut g1.weights[m * d..(m + 1) * d];
                for (gi, xi) in row.iter_mut().zip(x) {
                    *gi += d1[m] * xi;
                }
                g1.bias[m] += d1[m];
            }
        }
    }
    Ok((grad, sq / denom))
}

/// Exact analytic gradient of `batch_mse` with respect to every weight
/// and bias.
pub fn gradients(
    params: &NetworkParams,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<NetworkParams> {
    Ok(grad_and_mse(params, inputs, targets)?.0)
}

/// Trainer settings. The defaults mirror the classic variable-rate
/// momentum recipe; `normalize_inputs` and `soft_targets` are consumed
/// by the pipeline when it prepares inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub goal_mse: f64,
    pub max_epochs: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub lr_inc: f64,
    pub lr_dec: f64,
    pub max_perf_inc: f64,
    pub normalize_inputs: bool,
    pub soft_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            goal_mse: 1e-6,
            max_epochs: 1_000_000,
            lr0: 0.01,
            momentum: 0.9,
            lr_inc: 1.05,
            lr_dec: 0.7,
            max_perf_inc: 1.04,
            normalize_inputs: false,
            soft_targets: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.goal_mse > 0.0) {
            return Err(Error::Config("goal MSE must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::Config("initial learning rate must be positive".into()));
        }
        if !(self.lr_inc > 1.0) {
            return Err(Error::Config("learning-rate increase factor must exceed 1".into()));
        }
        if !(self.lr_dec > 0.0 && self.lr_dec < 1.0) {
            return Err(Error::Config("learning-rate decrease factor must be in (0, 1)".into()));
        }
        if !(self.max_perf_inc >= 1.0) {
            return Err(Error::Config("maximum performance increase must be at least 1".into()));
        }
        Ok(())
    }
}

/// One epoch in the trace: post-decision MSE and learning rate, and
/// whether the step was applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub mse: f64,
    pub lr: f64,
    pub accepted: bool,
}

/// Mutable trainer state threaded through `train_epoch`.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub lr: f64,
    pub prev_delta: NetworkParams,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(params: &NetworkParams, cfg: &TrainConfig) -> Self {
        Self { epoch: 0, lr: cfg.lr0, prev_delta: params.zeros_like(), history: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GoalReached,
    MaxEpochs,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::GoalReached => f.write_str("goal reached"),
            StopReason::MaxEpochs => f.write_str("max epochs reached"),
        }
    }
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub state: TrainState,
    pub stop: StopReason,
    pub final_mse: f64,
    pub warnings: Vec<String>,
}

/// The accept/reject rule: a candidate whose MSE exceeds
/// `max_perf_inc` times the current MSE is rejected and the rate
/// lowered; an accepted candidate that improved raises the rate.
/// Returns (accepted, new learning rate).
pub fn adaptive_decision(current_mse: f64, candidate_mse: f64, lr: f64, cfg: &TrainConfig) -> (bool, f64) {
    if candidate_mse > cfg.max_perf_inc * current_mse {
        (false, lr * cfg.lr_dec)
    } else if candidate_mse < current_mse {
        (true, lr * cfg.lr_inc)
    } else {
        (true, lr)
    }
}

/// One full-batch epoch. The candidate step
/// delta = mc * prev_delta - (1 - mc) * lr * gradient
/// is evaluated at params + delta and applied or rejected per
/// `adaptive_decision`; a rejection zeroes the momentum buffer so the
/// discarded direction cannot re-enter through it. The returned record
/// (also appended to the history) carries the post-decision MSE.
pub fn train_epoch(
    params: &mut NetworkParams,
    state: &mut TrainState,
    cfg: &TrainConfig,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<EpochRecord> {
    let (grad, current) = grad_and_mse(params, inputs, targets)?;
    if !current.is_finite() {
        return Err(Error::Divergence { epoch: state.epoch });
    }
    let delta = NetworkParams::momentum_step(&state.prev_delta, &grad, cfg.momentum, state.lr);
    let candidate = params.added(&delta);
    let candidate_mse = batch_mse(&candidate, inputs, targets)?;
    if !candidate_mse.is_finite() {
        return Err(Error::Divergence { epoch: state.epoch });
    }
    let (accepted, new_lr) = adaptive_decision(current, candidate_mse, state.lr, cfg);
    state.lr = new_lr;
    let mse = if accepted {
        *params = candidate;
        state.prev_delta = delta;
        candidate_mse
    } else {
        state.prev_delta.zero_in_place();
        current
    };
    state.epoch += 1;
    let record = EpochRecord { mse, lr: state.lr, accepted };
    state.history.push(record);
    Ok(record)
}

fn class_coverage_warnings(targets: &[Vec<f64>], n_classes: usize) -> Vec<String> {
    let mut covered = vec![false; n_classes];
    for t in targets {
        covered[argmax(t)] = true;
    }
    covered
        .iter()
        .enumerate()
        .filter(|(_, &c)| !c)
        .map(|(i, _)| format!("class {i} has no training samples"))
        .collect()
}

/// Initializes a network from `cfg` and trains until the MSE goal is met
/// or the epoch cap is hit. A goal already satisfied by the initial
/// parameters stops at epoch 0 with an empty history.
pub fn train(
    cfg: &NetworkConfig,
    tcfg: &TrainConfig,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    let mut params = init_params(cfg)?;
    check_batch(&params, inputs, targets)?;
    let warnings = class_coverage_warnings(targets, cfg.output_dim);
    let mut state = TrainState::new(&params, tcfg);
    let mut mse = batch_mse(&params, inputs, targets)?;
    if !mse.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let stop = loop {
        if mse <= tcfg.goal_mse {
            break StopReason::GoalReached;
        }
        if state.epoch >= tcfg.max_epochs {
            break StopReason::MaxEpochs;
        }
        mse = train_epoch(&mut params, &mut state, tcfg, inputs, targets)?.mse;
    };
    Ok(TrainOutcome { params, state, stop, final_mse: mse, warnings })
}

/// A trained classifier together with the feature-extraction settings
/// it expects, stored as a versioned text file.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: NetworkParams,
    pub orientation: Orientation,
    pub mode: AveragingMode,
    pub with_aggregates: bool,
    pub normalizer: Option<Normalizer>,
}

const MODEL_MAGIC: &str = "ZOCR-MLP v1";

fn push_float_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{v:.17e}"));
    }
    out.push('\n');
}

impl Model {
    /// Classifies a raw feature vector, applying the stored
    /// normalization first.
    pub fn classify(&self, features: &[f64]) -> Result<usize> {
        check_input(&self.params, features)?;
        let mut v = features.to_vec();
        if let Some(nz) = &self.normalizer {
            nz.apply(&mut v);
        }
        classify(&self.params, &v)
    }

    /// Renders the model file. Floats carry 18 significant digits, so
    /// parsing the text recovers every value bit for bit.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(MODEL_MAGIC);
        out.push('\n');
        out.push_str(&format!(
            "{} {} {}",
            self.orientation,
            self.mode,
            if self.with_aggregates { "aggregates" } else { "no-aggregates" }
        ));
        match &self.normalizer {
            Some(nz) => {
                out.push_str(" minmax");
                for v in nz.mins.iter().chain(&nz.maxs) {
                    out.push_str(&format!(" {v:.17e}"));
                }
            }
            None => out.push_str(" raw"),
        }
        out.push('\n');
        let (d, h1, h2, n) = self.params.dims();
        out.push_str(&format!("{d} {h1} {h2} {n}\n"));
        for layer in &self.params.layers {
            for j in 0..layer.out_dim {
                push_float_row(&mut out, &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim]);
            }
            push_float_row(&mut out, &layer.bias);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Model::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Model> {
        let fail = |detail: String| Error::ModelFormat { path: origin.to_path_buf(), detail };
        let mut lines = text.lines().enumerate();
        let mut next_line = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .ok_or_else(|| fail(format!("unexpected end of file, expected {what}")))
        };

        let (_, magic) = next_line("magic line")?;
        if magic != MODEL_MAGIC {
            return Err(fail(format!("bad magic line {magic:?}, expected {MODEL_MAGIC:?}")));
        }

        let (ln2, meta) = next_line("extraction settings line")?;
        let mut toks = meta.split_whitespace();
        let mut meta_tok = |what: &str| -> Result<&str> {
            toks.next().ok_or_else(|| fail(format!("line {}: missing {what}", ln2 + 1)))
        };
        let orientation: Orientation = meta_tok("orientation")?.parse()?;
        let mode: AveragingMode = meta_tok("averaging mode")?.parse()?;
        let with_aggregates = match meta_tok("aggregates flag")? {
            "aggregates" => true,
            "no-aggregates" => false,
            other => return Err(fail(format!("line {}: bad aggregates flag {other:?}", ln2 + 1))),
        };
        let norm_kind = meta_tok("normalization kind")?;
        let norm_values: Vec<f64> = match norm_kind {
            "raw" => Vec::new(),
            "minmax" => toks
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        fail(format!("line {}: bad normalization value {t:?}", ln2 + 1))
                    })
                })
                .collect::<Result<_>>()?,
            other => return Err(fail(format!("line {}: bad normalization kind {other:?}", ln2 + 1))),
        };

        let (ln3, dims_line) = next_line("dimensions line")?;
        let dims: Vec<usize> = dims_line
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| fail(format!("line {}: bad dimension {t:?}", ln3 + 1)))
            })
            .collect::<Result<_>>()?;
        let [d, h1, h2, n] = dims[..] else {
            return Err(fail(format!("line {}: expected 4 dimensions, got {}", ln3 + 1, dims.len())));
        };
        let cfg = NetworkConfig { input_dim: d, hidden: [h1, h2], output_dim: n, seed: 0 };
        cfg.validate()?;

        let normalizer = match norm_kind {
            "raw" => None,
            _ => {
                if norm_values.len() != 2 * d {
                    return Err(fail(format!(
                        "line {}: expected {} normalization values, got {}",
                        ln2 + 1,
                        2 * d,
                        norm_values.len()
                    )));
                }
                Some(Normalizer { mins: norm_values[..d].to_vec(), maxs: norm_values[d..].to_vec() })
            }
        };

        let mut float_row = |what: &str, expected: usize| -> Result<Vec<f64>> {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| fail(format!("unexpected end of file, expected {what}")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| fail(format!("line {}: bad value {t:?} in {what}", ln + 1)))
                })
                .collect::<Result<_>>()?;
            if row.len() != expected {
                return Err(fail(format!(
                    "line {}: expected {expected} values in {what}, got {}",
                    ln + 1,
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
                return Err(fail(format!("line {}: non-finite value {bad} in {what}", ln + 1)));
            }
            Ok(row)
        };

        let shapes = [(d, h1), (h1, h2), (h2, n)];
        let mut layers = Vec::with_capacity(3);
        for (li, &(in_dim, out_dim)) in shapes.iter().enumerate() {
            let mut weights = Vec::with_capacity(in_dim * out_dim);
            for j in 0..out_dim {
                weights.extend(float_row(&format!("layer {} weight row {j}", li + 1), in_dim)?);
            }
            let bias = float_row(&format!("layer {} bias", li + 1), out_dim)?;
            layers.push(Layer { in_dim, out_dim, weights, bias });
        }
        for (ln, line) in lines {
            if !line.trim().is_empty() {
                return Err(fail(format!("line {}: trailing data {line:?}", ln + 1)));
            }
        }
        let layers: [Layer; 3] = layers.try_into().expect("three layers");
        Ok(Model { params: NetworkParams { layers }, orientation, mode, with_aggregates, normalizer })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::path::PathBuf;

    fn small_cfg(seed: u64) -> NetworkConfig {
        NetworkConfig { input_dim: 3, hidden: [4, 4], output_dim: 2, seed }
    }

    fn one_param_net(w1: f64, w2: f64, w3a: f64, w3b: f64) -> NetworkParams {
        // 1-1-1-2 chain with chosen weights, zero biases
        NetworkParams {
            layers: [
                Layer { in_dim: 1, out_dim: 1, weights: vec![w1], bias: vec![0.0] },
                Layer { in_dim: 1, out_dim: 1, weights: vec![w2], bias: vec![0.0] },
                Layer { in_dim: 1, out_dim: 2, weights: vec![w3a, w3b], bias: vec![0.0, 0.0] },
            ],
        }
    }

    #[test]
    fn same_seed_gives_identical_params() {
        let a = init_params(&small_cfg(42)).unwrap();
        let b = init_params(&small_cfg(42)).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        let c = init_params(&small_cfg(43)).unwrap();
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn init_respects_fan_in_bounds_and_zero_biases() {
        let cfg = NetworkConfig { input_dim: 1, hidden: [1, 4], output_dim: 2, seed: 5 };
        let p = init_params(&cfg).unwrap();
        // fan_in 1 for the first two layers: weights within [-1, 1]
        assert!(p.layers[0].weights.iter().all(|w| (-1.0..=1.0).contains(w)));
        assert!(p.layers[1].weights.iter().all(|w| (-1.0..=1.0).contains(w)));
        let bound = 1.0 / 2.0; // fan_in 4
        assert!(p.layers[2].weights.iter().all(|w| w.abs() <= bound));
        for l in &p.layers {
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_draws_center_on_zero() {
        let cfg = NetworkConfig { input_dim: 50, hidden: [40, 30], output_dim: 10, seed: 9 };
        let p = init_params(&cfg).unwrap();
        // undo the fan-in scaling so every draw is uniform on [-1, 1]
        let mut sum = 0.0;
        let mut count = 0usize;
        for l in &p.layers {
            let scale = (l.in_dim as f64).sqrt();
            for w in &l.weights {
                sum += w * scale;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        // sigma of the mean is 1/sqrt(3 count); allow 3 sigma
        let three_sigma = 3.0 / (3.0 * count as f64).sqrt();
        assert!(mean.abs() < three_sigma, "mean {mean}, 3 sigma {three_sigma}");
    }

    #[test]
    fn logsig_midpoint_symmetry_and_stability() {
        assert_eq!(logsig(0.0), 0.5);
        for x in [-30.0, -3.7, -0.2, 0.9, 8.4, 25.0] {
            let s = logsig(x) + logsig(-x);
            assert!((s - 1.0).abs() < 1e-15, "x={x} sum={s}");
        }
        let tiny = logsig(-1000.0);
        assert!((0.0..=1e-300).contains(&tiny), "{tiny}");
        assert!(logsig(1000.0) <= 1.0 && logsig(1000.0) > 1.0 - 1e-12);
        assert!(logsig(f64::MAX).is_finite());
        assert!(logsig(f64::MIN).is_finite());
    }

    #[test]
    fn zero_params_give_all_half_and_class_zero() {
        let p = init_params(&small_cfg(1)).unwrap().zeros_like();
        let acts = forward(&p, &[0.3, -2.0, 5.0]).unwrap();
        assert!(acts.hidden1.iter().all(|&a| a == 0.5));
        assert!(acts.hidden2.iter().all(|&a| a == 0.5));
        assert!(acts.output.iter().all(|&a| a == 0.5));
        assert_eq!(classify(&p, &[0.3, -2.0, 5.0]).unwrap(), 0);
    }

    #[test]
    fn unit_chain_matches_hand_computed_activations() {
        let p = one_param_net(1.0, 1.0, 1.0, 0.0);
        let acts = forward(&p, &[1.0]).unwrap();
        assert!((acts.hidden1[0] - 0.7310585786300049).abs() < 1e-15);
        assert!((acts.hidden2[0] - 0.6750375273768237).abs() < 1e-15);
        assert!((acts.output[0] - 0.6626302265192633).abs() < 1e-15);
        assert_eq!(acts.output[1], 0.5);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let p = init_params(&small_cfg(1)).unwrap();
        let err = forward(&p, &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 3, actual: 2 }));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.7, 0.7]), 1);
    }

    #[test]
    fn mse_of_half_outputs_against_one_hot_is_quarter() {
        let p = init_params(&small_cfg(1)).unwrap().zeros_like();
        let mse = batch_mse(&p, &[vec![0.0, 0.0, 0.0]], &[vec![1.0, 0.0]]).unwrap();
        assert_eq!(mse, 0.25);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let p = init_params(&small_cfg(1)).unwrap();
        assert!(matches!(batch_mse(&p, &[], &[]), Err(Error::EmptyTrainingSet)));
        assert!(matches!(gradients(&p, &[], &[]), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn gradient_is_zero_when_targets_equal_outputs() {
        let p = init_params(&small_cfg(3)).unwrap();
        let x = vec![0.2, 0.8, 0.5];
        let y = forward(&p, &x).unwrap().output;
        let g = gradients(&p, &[x], &[y]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    fn finite_difference_check(cfg: &NetworkConfig, samples: usize, seed: u64) -> f64 {
        let params = init_params(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..samples)
            .map(|_| (0..cfg.input_dim).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let targets: Vec<Vec<f64>> = (0..samples)
            .map(|_| {
                let hot = rng.gen_range(0..cfg.output_dim);
                (0..cfg.output_dim).map(|j| if j == hot { 1.0 } else { 0.0 }).collect()
            })
            .collect();
        let analytic = gradients(&params, &inputs, &targets).unwrap().flatten();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..params.param_count() {
            let orig = params.get_param(i);
            let mut p = params.clone();
            p.set_param(i, orig + h);
            let up = batch_mse(&p, &inputs, &targets).unwrap();
            p.set_param(i, orig - h);
            let down = batch_mse(&p, &inputs, &targets).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let cfg = NetworkConfig { input_dim: 5, hidden: [7, 7], output_dim: 3, seed: 11 };
        let worst = finite_difference_check(&cfg, 4, 99);
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn duplicating_samples_leaves_gradient_unchanged() {
        let p = init_params(&small_cfg(6)).unwrap();
        let inputs = vec![vec![0.1, 0.9, 0.4], vec![0.7, 0.2, 0.6]];
        let targets = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let g1 = gradients(&p, &inputs, &targets).unwrap().flatten();
        let doubled_in: Vec<_> = inputs.iter().chain(&inputs).cloned().collect();
        let doubled_t: Vec<_> = targets.iter().chain(&targets).cloned().collect();
        let g2 = gradients(&p, &doubled_in, &doubled_t).unwrap().flatten();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn adaptive_rule_follows_the_worked_examples() {
        let cfg = TrainConfig::default();
        // candidate 1.05 > 1.04 * 1.0: rejected, rate drops to 0.07
        let (accepted, lr) = adaptive_decision(1.0, 1.05, 0.1, &cfg);
        assert!(!accepted);
        assert_eq!(lr, 0.1 * 0.7);
        assert!((lr - 0.07).abs() < 1e-15);
        // candidate 0.9 < 1.0: accepted, rate rises to 0.105
        let (accepted, lr) = adaptive_decision(1.0, 0.9, 0.1, &cfg);
        assert!(accepted);
        assert_eq!(lr, 0.1 * 1.05);
        assert!((lr - 0.105).abs() < 1e-15);
        // exactly at the tolerance bound: accepted, not an improvement
        let (accepted, lr) = adaptive_decision(1.0, 1.04, 0.1, &cfg);
        assert!(accepted);
        assert_eq!(lr, 0.1);
    }

    #[test]
    fn zero_momentum_step_equals_plain_gradient_descent() {
        let mut params = init_params(&small_cfg(8)).unwrap();
        let inputs = vec![vec![0.3, 0.6, 0.9]];
        let targets = vec![vec![1.0, 0.0]];
        let cfg = TrainConfig { momentum: 0.0, lr0: 0.5, ..TrainConfig::default() };
        let grad = gradients(&params, &inputs, &targets).unwrap();
        let mut by_hand = params.clone();
        for i in 0..by_hand.param_count() {
            by_hand.set_param(i, by_hand.get_param(i) - 0.5 * grad.get_param(i));
        }
        let mut state = TrainState::new(&params, &cfg);
        let rec = train_epoch(&mut params, &mut state, &cfg, &inputs, &targets).unwrap();
        assert!(rec.accepted);
        let got = params.flatten();
        let want = by_hand.flatten();
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.to_bits(), w.to_bits());
        }
    }

    #[test]
    fn rejected_epoch_leaves_params_unchanged_and_cools_the_rate() {
        let mut params = init_params(&small_cfg(2)).unwrap();
        let inputs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let targets = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        // an absurd initial rate forces an overshoot within a few epochs
        let cfg = TrainConfig { lr0: 5000.0, ..TrainConfig::default() };
        let mut state = TrainState::new(&params, &cfg);
        let mut seen_rejection = false;
        for _ in 0..50 {
            let before = params.flatten();
            let lr_before = state.lr;
            let prev_mse = state.history.last().map(|r| r.mse);
            let rec = train_epoch(&mut params, &mut state, &cfg, &inputs, &targets).unwrap();
            if !rec.accepted {
                seen_rejection = true;
                let after = params.flatten();
                for (b, a) in before.iter().zip(&after) {
                    assert_eq!(b.to_bits(), a.to_bits());
                }
                assert_eq!(rec.lr, lr_before * cfg.lr_dec);
                assert!(state.prev_delta.flatten().iter().all(|&v| v == 0.0));
                if let Some(m) = prev_mse {
                    assert_eq!(rec.mse, m);
                }
                break;
            }
        }
        assert!(seen_rejection, "no rejection observed in 50 epochs");
    }

    #[test]
    fn satisfied_goal_stops_before_any_epoch() {
        let cfg = small_cfg(4);
        // outputs are in (0, 1), so an MSE goal of 1 always holds at init
        let tcfg = TrainConfig { goal_mse: 1.0, ..TrainConfig::default() };
        let out = train(&cfg, &tcfg, &[vec![0.0, 0.0, 0.0]], &[vec![1.0, 0.0]]).unwrap();
        assert_eq!(out.state.epoch, 0);
        assert!(out.state.history.is_empty());
        assert_eq!(out.stop, StopReason::GoalReached);
        assert_eq!(out.params.flatten(), init_params(&cfg).unwrap().flatten());
    }

    #[test]
    fn toy_two_class_problem_converges() {
        let cfg = NetworkConfig { input_dim: 2, hidden: [4, 4], output_dim: 2, seed: 7 };
        let tcfg = TrainConfig { goal_mse: 1e-3, max_epochs: 10_000, ..TrainConfig::default() };
        let inputs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let targets = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = train(&cfg, &tcfg, &inputs, &targets).unwrap();
        assert_eq!(out.stop, StopReason::GoalReached, "final MSE {}", out.final_mse);
        assert!(out.final_mse <= 1e-3);
        assert!(out.state.epoch <= 10_000);
        assert_eq!(classify(&out.params, &inputs[0]).unwrap(), 0);
        assert_eq!(classify(&out.params, &inputs[1]).unwrap(), 1);
    }

    #[test]
    fn history_never_exceeds_the_tolerated_increase() {
        let cfg = NetworkConfig { input_dim: 2, hidden: [3, 3], output_dim: 2, seed: 12 };
        let tcfg = TrainConfig { lr0: 800.0, max_epochs: 400, goal_mse: 1e-9, ..TrainConfig::default() };
        let inputs = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.4, 0.4]];
        let targets = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let out = train(&cfg, &tcfg, &inputs, &targets).unwrap();
        let hist = &out.state.history;
        assert!(!hist.is_empty());
        let mut rejections = 0;
        for w in hist.windows(2) {
            assert!(
                w[1].mse <= tcfg.max_perf_inc * w[0].mse * (1.0 + 1e-12),
                "{} after {}",
                w[1].mse,
                w[0].mse
            );
            if !w[1].accepted {
                assert_eq!(w[1].mse, w[0].mse);
                rejections += 1;
            }
        }
        // the aggressive initial rate must have triggered the rule
        assert!(rejections > 0);
    }

    #[test]
    fn identical_runs_share_the_whole_trajectory() {
        let cfg = NetworkConfig { input_dim: 2, hidden: [5, 3], output_dim: 2, seed: 3 };
        let tcfg = TrainConfig { max_epochs: 60, goal_mse: 1e-12, ..TrainConfig::default() };
        let inputs = vec![vec![0.1, 0.7], vec![0.8, 0.3]];
        let targets = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let a = train(&cfg, &tcfg, &inputs, &targets).unwrap();
        let b = train(&cfg, &tcfg, &inputs, &targets).unwrap();
        let (fa, fb) = (a.params.flatten(), b.params.flatten());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.state.history.len(), b.state.history.len());
        for (ra, rb) in a.state.history.iter().zip(&b.state.history) {
            assert_eq!(ra.mse.to_bits(), rb.mse.to_bits());
            assert_eq!(ra.lr.to_bits(), rb.lr.to_bits());
            assert_eq!(ra.accepted, rb.accepted);
        }
    }

    #[test]
    fn missing_classes_produce_warnings() {
        let cfg = NetworkConfig { input_dim: 2, hidden: [2, 2], output_dim: 3, seed: 1 };
        let tcfg = TrainConfig { max_epochs: 1, goal_mse: 1e-12, ..TrainConfig::default() };
        let out = train(&cfg, &tcfg, &[vec![0.1, 0.2]], &[vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(out.warnings.len(), 2);
        assert!(out.warnings[0].contains("class 0"));
        assert!(out.warnings[1].contains("class 2"));
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let base = TrainConfig::default();
        assert!(TrainConfig { momentum: 1.0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { momentum: -0.1, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { lr_dec: 1.0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { lr_inc: 1.0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { goal_mse: 0.0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { lr0: 0.0, ..base.clone() }.validate().is_err());
        assert!(base.validate().is_ok());
        assert!(NetworkConfig { output_dim: 1, ..small_cfg(0) }.validate().is_err());
        assert!(NetworkConfig { hidden: [0, 3], ..small_cfg(0) }.validate().is_err());
    }

    fn sample_model(with_normalizer: bool) -> Model {
        let params = init_params(&NetworkConfig {
            input_dim: 4,
            hidden: [3, 2],
            output_dim: 2,
            seed: 77,
        })
        .unwrap();
        let normalizer = with_normalizer.then(|| Normalizer {
            mins: vec![0.0, 0.25, -1.5, 0.0],
            maxs: vec![1.0, 0.75, 2.5, 0.0],
        });
        Model {
            params,
            orientation: Orientation::Diagonal,
            mode: AveragingMode::AllLines,
            with_aggregates: false,
            normalizer,
        }
    }

    #[test]
    fn model_file_round_trips_bit_for_bit() {
        for with_norm in [false, true] {
            let model = sample_model(with_norm);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.mlp");
            model.save(&path).unwrap();
            let text = fs::read_to_string(&path).unwrap();
            assert!(text.starts_with("ZOCR-MLP v1\n"));
            let loaded = Model::load(&path).unwrap();
            let (fa, fb) = (model.params.flatten(), loaded.params.flatten());
            for (x, y) in fa.iter().zip(&fb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(loaded.orientation, model.orientation);
            assert_eq!(loaded.mode, model.mode);
            assert_eq!(loaded.with_aggregates, model.with_aggregates);
            assert_eq!(loaded.normalizer, model.normalizer);
            assert_eq!(loaded.render(), text);
        }
    }

    #[test]
    fn model_parse_rejects_malformed_files() {
        let origin = PathBuf::from("test.mlp");
        let good = sample_model(false).render();

        let err = Model::parse("NOPE v9\n", &origin).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");

        let truncated: String = good.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(Model::parse(&truncated, &origin).is_err());

        let mut lines: Vec<String> = good.lines().map(String::from).collect();
        lines[3] = format!("{} 1.0", lines[3]); // extra value in a weight row
        assert!(Model::parse(&lines.join("\n"), &origin).is_err());

        let bad_dims = good.replacen("4 3 2 2", "4 3 2", 1);
        assert!(Model::parse(&bad_dims, &origin).is_err());

        let trailing = format!("{good}0.5 0.5\n");
        let err = Model::parse(&trailing, &origin).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn model_classify_applies_the_stored_normalization() {
        let model = sample_model(true);
        let raw = vec![0.5, 0.5, 0.5, 0.0];
        let mut scaled = raw.clone();
        model.normalizer.as_ref().unwrap().apply(&mut scaled);
        assert_eq!(model.classify(&raw).unwrap(), classify(&model.params, &scaled).unwrap());
        assert!(model.classify(&[1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn activations_stay_strictly_inside_unit_interval(
            seed in 0u64..1000,
            xs in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let p = init_params(&small_cfg(seed)).unwrap();
            let acts = forward(&p, &xs).unwrap();
            for a in acts.hidden1.iter().chain(&acts.hidden2).chain(&acts.output) {
                prop_assert!(*a > 0.0 && *a < 1.0 && a.is_finite());
            }
        }

        #[test]
        fn mse_is_bounded_for_one_hot_targets(
            seed in 0u64..1000,
            xs in proptest::collection::vec(0.0f64..10.0, 3),
            hot in 0usize..2,
        ) {
            let p = init_params(&small_cfg(seed)).unwrap();
            let target: Vec<f64> = (0..2).map(|j| if j == hot { 1.0 } else { 0.0 }).collect();
            let mse = batch_mse(&p, &[xs], &[target]).unwrap();
            prop_assert!((0.0..=1.0).contains(&mse));
        }

        #[test]
        fn classify_is_invariant_under_monotone_output_rescaling(
            out in proptest::collection::vec(0.01f64..0.99, 2..8),
        ) {
            let scaled: Vec<f64> = out.iter().map(|v| v * 3.0 + 1.0).collect();
            prop_assert_eq!(argmax(&out), argmax(&scaled));
        }
    }
}
