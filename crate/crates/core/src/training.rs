//! Loss, optimizer, parameter initialization, training loop and RMSE metrics.
//!
//! Per batch the loss is `MSE + γ·KLI²`, both normalized by the batch size;
//! the total loss is the mean over batches. Inside the loss the energy is
//! pooled from the true forces. RMSE evaluation pools predicted forces.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::batch_gradient;
use crate::model::{self, ModelParams, PoolingSource, ScaledSample, Targets, WireLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the squared KL-inspired term.
    pub gamma: f64,
    /// Guard added to predictions inside the log ratio.
    pub epsilon: f64,
    pub batch_size: usize,
    /// Clip the batch KLI² sum at zero before weighting. The raw sum can be
    /// negative, which would leave the loss unbounded below.
    pub clip_kli: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 0.03125,
            epsilon: 1e-8,
            batch_size: 128,
            clip_kli: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be ≥ 0, got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be ≥ 1"));
        }
        Ok(())
    }

    /// Number of batches for `n` samples; the last one may be partial.
    pub fn batch_count(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

fn check_shapes(predictions: &[Targets], labels: &[Targets]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

/// `(1/b)·Σ_i [(e − ê)² + Σ (F − F̂)²]`.
pub fn mse_batch(predictions: &[Targets], labels: &[Targets]) -> Result<f64> {
    check_shapes(predictions, labels)?;
    let mut acc = 0.0;
    for (p, l) in predictions.iter().zip(labels) {
        acc += (l.energy - p.energy).powi(2);
        for j in 0..9 {
            acc += (l.forces[j] - p.forces[j]).powi(2);
        }
    }
    Ok(acc / labels.len() as f64)
}

/// `|v|²·log|v/(v̂ + ε)|²`, with a zero label contributing exactly zero.
pub fn kli_term(label: f64, prediction: f64, epsilon: f64) -> f64 {
    if label == 0.0 {
        return 0.0;
    }
    let ratio = label / (prediction + epsilon);
    label * label * (ratio * ratio).ln()
}

/// Derivative of [`kli_term`] with respect to the prediction.
pub fn kli_term_derivative(label: f64, prediction: f64, epsilon: f64) -> f64 {
    if label == 0.0 {
        return 0.0;
    }
    -2.0 * label * label / (prediction + epsilon)
}

/// Unclipped squared KL-inspired term of a batch.
pub fn kli_batch_sq(predictions: &[Targets], labels: &[Targets], epsilon: f64) -> Result<f64> {
    check_shapes(predictions, labels)?;
    let mut acc = 0.0;
    for (p, l) in predictions.iter().zip(labels) {
        acc += kli_term(l.energy, p.energy, epsilon);
        for j in 0..9 {
            acc += kli_term(l.forces[j], p.forces[j], epsilon);
        }
    }
    Ok(acc / labels.len() as f64)
}

/// `MSE + γ·KLI²` for one batch.
pub fn batch_loss(predictions: &[Targets], labels: &[Targets], cfg: &LossConfig) -> Result<f64> {
    let mse = mse_batch(predictions, labels)?;
    let mut kli = kli_batch_sq(predictions, labels, cfg.epsilon)?;
    if cfg.clip_kli {
        kli = kli.max(0.0);
    }
    Ok(mse + cfg.gamma * kli)
}

/// Squared force residuals summed per axis, normalized by batch size.
pub fn axis_losses(predictions: &[Targets], labels: &[Targets]) -> Result<[f64; 3]> {
    check_shapes(predictions, labels)?;
    let mut acc = [0.0; 3];
    for (p, l) in predictions.iter().zip(labels) {
        for j in 0..9 {
            let (_, axis) = WireLayout::atom_axis(j);
            acc[axis.index()] += (l.forces[j] - p.forces[j]).powi(2);
        }
    }
    let n = labels.len() as f64;
    Ok(acc.map(|a| a / n))
}

fn labels_of(batch: &[ScaledSample]) -> Result<Vec<Targets>> {
    batch.iter().map(|s| s.labels.ok_or(Error::Unlabeled)).collect()
}

fn predictions(batch: &[ScaledSample], params: &ModelParams, pooling: PoolingSource) -> Result<Vec<Targets>> {
    batch
        .par_iter()
        .map(|s| Ok(model::predict(s, params, pooling)?.targets()))
        .collect()
}

/// Loss components accumulated over a sequence of batches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub axis: [f64; 3],
}

/// Mean batch loss over `batches` (train-time pooling).
pub fn total_loss(batches: &[&[ScaledSample]], params: &ModelParams, cfg: &LossConfig) -> Result<f64> {
    Ok(loss_breakdown(batches, params, cfg)?.total)
}

pub fn loss_breakdown(batches: &[&[ScaledSample]], params: &ModelParams, cfg: &LossConfig) -> Result<LossBreakdown> {
    if batches.is_empty() {
        return Err(Error::invalid("no batches"));
    }
    let mut out = LossBreakdown::default();
    for batch in batches {
        let labels = labels_of(batch)?;
        let preds = predictions(batch, params, PoolingSource::TrueForces)?;
        out.total += batch_loss(&preds, &labels, cfg)?;
        let ax = axis_losses(&preds, &labels)?;
        (0..3).for_each(|c| out.axis[c] += ax[c]);
    }
    let nb = batches.len() as f64;
    out.total /= nb;
    out.axis = out.axis.map(|a| a / nb);
    Ok(out)
}

/// Loss of a whole split, batched in order.
pub fn split_loss(samples: &[ScaledSample], params: &ModelParams, cfg: &LossConfig) -> Result<LossBreakdown> {
    let batches: Vec<&[ScaledSample]> = samples.chunks(cfg.batch_size).collect();
    loss_breakdown(&batches, params, cfg)
}

/// Random initialization: thetas ~ N(0, 1), biases ~ U(−0.2, 0.2), scales ~
/// U(1, 1.5). Draws follow the flat parameter order.
pub fn init_params(n_layers: usize, seed: u64) -> Result<ModelParams> {
    let mut p = ModelParams::neutral(n_layers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bias = Uniform::new(-0.2, 0.2).expect("valid range");
    let scale = Uniform::new(1.0, 1.5).expect("valid range");
    p.thetas.iter_mut().for_each(|t| *t = StandardNormal.sample(&mut rng));
    p.force_scales.iter_mut().for_each(|k| *k = scale.sample(&mut rng));
    p.force_bias = bias.sample(&mut rng);
    p.pool_scales.iter_mut().for_each(|k| *k = scale.sample(&mut rng));
    p.pool_bias = bias.sample(&mut rng);
    Ok(p)
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "optimizer holds {} moments, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient at parameter {i} (step {})",
                self.t + 1
            )));
        }
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_layers: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub loss: LossConfig,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_layers: 2,
            max_epochs: 500,
            patience: 50,
            learning_rate: 0.001,
            loss: LossConfig::default(),
            init_seed: 1,
            shuffle_seed: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.n_layers == 0 {
            return Err(Error::invalid("model needs at least one layer"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// One row of the loss log. Epoch 0 is the evaluation at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_loss_x: f64,
    pub train_loss_y: f64,
    pub train_loss_z: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub optimizer: Adam,
    pub epoch: usize,
    pub best_params: ModelParams,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub shuffle_seed: u64,
}

impl TrainState {
    pub fn new(params: ModelParams, learning_rate: f64, shuffle_seed: u64) -> TrainState {
        let n = params.param_count();
        TrainState {
            best_params: params.clone(),
            params,
            optimizer: Adam::new(n, learning_rate),
            epoch: 0,
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
            shuffle_seed,
        }
    }

    /// Records the validation loss of the current epoch; returns whether it
    /// improved on the best so far.
    fn observe_validation(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best_val_loss {
            self.best_val_loss = val_loss;
            self.best_params = self.params.clone();
            self.best_epoch = self.epoch;
            self.epochs_since_improvement = 0;
            true
        } else {
            self.epochs_since_improvement += 1;
            false
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Runs mini-batch Adam with early stopping on the validation loss.
pub fn train(train_set: &[ScaledSample], val_set: &[ScaledSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if val_set.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    let params = init_params(cfg.n_layers, cfg.init_seed)?;
    let mut state = TrainState::new(params, cfg.learning_rate, cfg.shuffle_seed);
    train_from(&mut state, train_set, val_set, cfg)
        .map(|(log, stopped_early)| TrainOutcome { state, log, stopped_early })
}

fn train_from(
    state: &mut TrainState,
    train_set: &[ScaledSample],
    val_set: &[ScaledSample],
    cfg: &TrainConfig,
) -> Result<(Vec<EpochRecord>, bool)> {
    let loss_cfg = &cfg.loss;
    let mut rng = ChaCha8Rng::seed_from_u64(state.shuffle_seed);
    let mut log = Vec::with_capacity(cfg.max_epochs + 1);

    let init_train = split_loss(train_set, &state.params, loss_cfg)?;
    let init_val = split_loss(val_set, &state.params, loss_cfg)?.total;
    state.observe_validation(init_val);
    log.push(record(0, init_train, init_val));
    log::info!("epoch 0: train {:.6} val {:.6}", init_train.total, init_val);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopped_early = false;
    while state.epoch < cfg.max_epochs {
        if state.epochs_since_improvement >= cfg.patience {
            stopped_early = true;
            break;
        }
        state.epoch += 1;
        order.shuffle(&mut rng);
        let mut running = LossBreakdown::default();
        let mut n_batches = 0usize;
        for chunk in order.chunks(loss_cfg.batch_size) {
            let batch: Vec<ScaledSample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (losses, grad) = batch_gradient(&batch, &state.params, loss_cfg)?;
            if !losses.total.is_finite() {
                return Err(Error::Numerical(format!("non-finite batch loss at epoch {}", state.epoch)));
            }
            running.total += losses.total;
            (0..3).for_each(|c| running.axis[c] += losses.axis[c]);
            n_batches += 1;

            let mut flat = state.params.to_flat();
            state.optimizer.step(&mut flat, &grad.values)?;
            state.params = ModelParams::from_flat(cfg.n_layers, &flat)?;
        }
        let nb = n_batches as f64;
        running.total /= nb;
        running.axis = running.axis.map(|a| a / nb);

        let val = split_loss(val_set, &state.params, loss_cfg)?.total;
        if !val.is_finite() {
            return Err(Error::Numerical(format!("non-finite validation loss at epoch {}", state.epoch)));
        }
        let improved = state.observe_validation(val);
        log.push(record(state.epoch, running, val));
        log::info!(
            "epoch {}: train {:.6} val {:.6}{}",
            state.epoch,
            running.total,
            val,
            if improved { " *" } else { "" }
        );
    }
    Ok((log, stopped_early))
}

fn record(epoch: usize, train: LossBreakdown, val: f64) -> EpochRecord {
    EpochRecord {
        epoch,
        train_loss: train.total,
        val_loss: val,
        train_loss_x: train.axis[0],
        train_loss_y: train.axis[1],
        train_loss_z: train.axis[2],
    }
}

/// Writes the loss log as CSV.
pub fn write_loss_log(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in log {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    pub energy: f64,
    pub forces: f64,
}

/// Energy RMSE and force RMSE over all nine components.
pub fn rmse(predictions: &[Targets], labels: &[Targets]) -> Result<Rmse> {
    check_shapes(predictions, labels)?;
    Ok(rmse_of(predictions, labels))
}

fn rmse_of(predictions: &[Targets], labels: &[Targets]) -> Rmse {
    let mut se_e = 0.0;
    let mut se_f = 0.0;
    for (p, l) in predictions.iter().zip(labels) {
        se_e += (l.energy - p.energy).powi(2);
        for j in 0..9 {
            se_f += (l.forces[j] - p.forces[j]).powi(2);
        }
    }
    let n = labels.len() as f64;
    Rmse {
        energy: (se_e / n).sqrt(),
        forces: (se_f / (9.0 * n)).sqrt(),
    }
}

/// RMSE of energy and of all force components, predicted forces pooled.
pub fn evaluate_rmse(samples: &[ScaledSample], params: &ModelParams) -> Result<Rmse> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    let labels = labels_of(samples)?;
    let preds = predictions(samples, params, PoolingSource::PredictedForces)?;
    Ok(rmse_of(&preds, &labels))
}

/// RMSE of a predictor that always outputs the per-target mean of `reference`.
pub fn mean_predictor_rmse(reference: &[ScaledSample], samples: &[ScaledSample]) -> Result<Rmse> {
    if reference.is_empty() || samples.is_empty() {
        return Err(Error::invalid("mean predictor needs non-empty splits"));
    }
    let refs = labels_of(reference)?;
    let n = refs.len() as f64;
    let mut mean = Targets {
        forces: [0.0; 9],
        energy: 0.0,
    };
    for l in &refs {
        mean.energy += l.energy / n;
        for j in 0..9 {
            mean.forces[j] += l.forces[j] / n;
        }
    }
    let labels = labels_of(samples)?;
    Ok(rmse_of(&vec![mean; labels.len()], &labels))
}
