//! Adam with a step-decay learning-rate schedule, and the training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{backward_cached, forward_cached, l2_loss, ModelConfig, ModelParams};
use crate::tensor::{Scalar, Tensor4};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
    pub total_iters: u64,
    pub batch_size: usize,
    pub patch_in: usize,
    pub patch_out: usize,
    pub seed: u64,
    pub log_every: u64,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.0005,
            decay_factor: 0.93,
            decay_every: 50_000,
            total_iters: 400_000,
            batch_size: 64,
            patch_in: 36,
            patch_out: 20,
            seed: 0,
            log_every: 100,
            checkpoint_every: 50_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::Config(format!("decay_factor must be positive, got {}", self.decay_factor)));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let shrink = model.shrinkage();
        if self.patch_in < self.patch_out || self.patch_in - self.patch_out != shrink {
            return Err(Error::Config(format!(
                "patch_in ({}) - patch_out ({}) must equal the model's shrinkage {shrink}",
                self.patch_in, self.patch_out
            )));
        }
        if self.patch_out == 0 {
            return Err(Error::Config("patch_out must be at least 1".into()));
        }
        Ok(())
    }
}

/// `lr0 · decay_factor^⌊iter / decay_every⌋`
pub fn lr_at(config: &TrainConfig, iter: u64) -> f64 {
    let steps = iter / config.decay_every.max(1);
    config.lr0 * config.decay_factor.powf(steps as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates mirroring [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self::with_hyper(params, AdamHyper::default())
    }

    pub fn with_hyper(params: &ModelParams<T>, hyper: AdamHyper) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::invalid("adam_step", format!("learning rate must be positive, got {lr}")));
    }
    if params.config != grads.config || params.config != state.m.config {
        return Err(Error::invalid("adam_step", "parameter, gradient and state layouts differ"));
    }
    state.t += 1;
    let AdamHyper { beta1, beta2, epsilon } = state.hyper;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
    let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - beta1), T::from_f64_lossy(1.0 - beta2));
    let step = T::from_f64_lossy(lr / bc1);
    let inv_bc2 = T::from_f64_lossy(1.0 / bc2);
    let eps = T::from_f64_lossy(epsilon);

    let pv = params.views_mut();
    let gv = grads.views();
    let mv = state.m.views_mut();
    let vv = state.v.views_mut();
    for (((p, g), m), v) in pv.into_iter().zip(gv).zip(mv).zip(vv) {
        if p.data.len() != g.data.len() {
            return Err(Error::shape("adam_step", "parameter length", p.data.len(), g.data.len()));
        }
        for (((w, &gi), mi), vi) in p.data.iter_mut().zip(g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
            *mi = b1 * *mi + one_b1 * gi;
            *vi = b2 * *vi + one_b2 * gi * gi;
            let denom = (*vi * inv_bc2).sqrt() + eps;
            *w -= step * *mi / denom;
        }
    }
    Ok(())
}

/// Source of training batches.
pub trait BatchSource {
    /// `(rgb, label)` with dims `(batch, 3, patch_in, patch_in)` and
    /// `(batch, C, patch_out, patch_out)`.
    fn sample_batch(&mut self, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<(Tensor4<f32>, Tensor4<f32>)>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// In-memory pool of single-sample `(rgb, label)` patch pairs, sampled
/// uniformly with replacement.
pub struct PatchPool {
    rgb: Vec<Tensor4<f32>>,
    label: Vec<Tensor4<f32>>,
}

impl PatchPool {
    pub fn new() -> Self {
        Self {
            rgb: Vec::new(),
            label: Vec::new(),
        }
    }

    pub fn push(&mut self, rgb: Tensor4<f32>, label: Tensor4<f32>) {
        self.rgb.push(rgb);
        self.label.push(label);
    }
}

impl Default for PatchPool {
    fn default() -> Self {
        Self::new()
    }
}

impl BatchSource for PatchPool {
    fn sample_batch(&mut self, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
        if self.rgb.is_empty() {
            return Err(Error::EmptyDataset("patch pool has no pairs".into()));
        }
        let idx: Vec<usize> = (0..batch_size).map(|_| rng.gen_range(0..self.rgb.len())).collect();
        let rgb: Vec<_> = idx.iter().map(|&i| self.rgb[i].clone()).collect();
        let label: Vec<_> = idx.iter().map(|&i| self.label[i].clone()).collect();
        Ok((Tensor4::stack(&rgb)?, Tensor4::stack(&label)?))
    }

    fn len(&self) -> usize {
        self.rgb.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: u64,
    pub lr: f64,
    pub loss: f64,
}

/// Called after every logged iteration and every checkpoint boundary.
pub trait TrainObserver {
    fn on_log(&mut self, _record: &LossRecord) -> Result<()> {
        Ok(())
    }
    /// `iter` is the number of completed iterations.
    fn on_checkpoint(&mut self, _iter: u64, _params: &ModelParams<f32>, _state: &AdamState<f32>) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub state: AdamState<f32>,
    pub history: Vec<LossRecord>,
}

/// Where a run starts: fresh or from a saved iteration.
pub struct TrainStart {
    pub params: ModelParams<f32>,
    pub state: AdamState<f32>,
    pub iter: u64,
}

impl TrainStart {
    pub fn fresh(params: ModelParams<f32>) -> Self {
        let state = AdamState::new(&params);
        Self { params, state, iter: 0 }
    }
}

/// Runs iterations `start.iter .. config.total_iters`.
///
/// Every iteration's loss lands in the returned history; `on_log` fires every
/// `log_every` iterations and on the last one.
pub fn train<S: BatchSource, O: TrainObserver>(
    start: TrainStart,
    config: &TrainConfig,
    data: &mut S,
    observer: &mut O,
) -> Result<TrainOutcome> {
    config.validate(&start.params.config)?;
    let TrainStart {
        mut params,
        mut state,
        iter: first,
    } = start;
    let mut history = Vec::new();
    if first >= config.total_iters {
        return Ok(TrainOutcome { params, state, history });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset("no training patches".into()));
    }
    // Resumed runs draw from a stream keyed on the start iteration.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ first.wrapping_mul(0x9E37_79B9_7F4A_7C15));

    for iter in first..config.total_iters {
        let (rgb, label) = data.sample_batch(config.batch_size, &mut rng)?;
        let cache = forward_cached(&params, &rgb)?;
        let (loss, grad) = l2_loss(&cache.output, &label)?;
        let loss = loss as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite { iter, loss });
        }
        let grads = backward_cached(&params, &cache, &grad)?;
        let lr = lr_at(config, iter);
        adam_step(&mut params, &grads.params, &mut state, lr)?;

        let record = LossRecord { iter, lr, loss };
        let done = iter + 1;
        if config.log_every > 0 && (iter % config.log_every == 0 || done == config.total_iters) {
            observer.on_log(&record)?;
        }
        history.push(record);
        if config.checkpoint_every > 0 && (done % config.checkpoint_every == 0 || done == config.total_iters) {
            observer.on_checkpoint(done, &params, &state)?;
        }
    }
    Ok(TrainOutcome { params, state, history })
}

/// One `iter,lr,loss` row.
pub fn loss_csv_line(r: &LossRecord) -> String {
    format!("{},{:e},{:e}", r.iter, r.lr, r.loss)
}

pub const LOSS_CSV_HEADER: &str = "iter,lr,loss";
