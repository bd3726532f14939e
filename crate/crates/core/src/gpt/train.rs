//! AdamW training loop with warmup and cosine learning-rate decay.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loader::Loader;
use super::model::Model;
use crate::error::GptError;
use crate::geocodec::TokenId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    /// Total optimizer steps; training resumes from `AdamState::t`.
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub warmup: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            steps: 5000,
            batch_size: 16,
            lr: 3e-4,
            min_lr: 3e-5,
            warmup: 100,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            grad_clip: 1.0,
            seed: 1337,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), GptError> {
        let bad = |m: &str| Err(GptError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.min_lr >= 0.0 && self.min_lr <= self.lr) {
            return bad("need 0 <= min_lr <= lr and lr > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must be in [0, 1)");
        }
        if self.weight_decay < 0.0 || self.grad_clip < 0.0 || self.eps <= 0.0 {
            return bad("weight_decay, grad_clip and eps must be non-negative");
        }
        Ok(())
    }

    /// Linear warmup to `lr`, then cosine decay to `min_lr` at `steps`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup {
            return self.lr * (step + 1) as f64 / self.warmup as f64;
        }
        if step >= self.steps {
            return self.min_lr;
        }
        let span = (self.steps - self.warmup).max(1) as f64;
        let ratio = (step - self.warmup) as f64 / span;
        let coeff = 0.5 * (1.0 + Float::cos(core::f64::consts::PI * ratio));
        self.min_lr + coeff * (self.lr - self.min_lr)
    }
}

/// First and second moment estimates and the number of completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Generator for the batch and dropout of `step`; a function of the seed and
/// step only, so interrupted runs resume exactly.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// One optimizer step. Returns the batch loss before the update.
pub fn train_step(
    model: &mut Model<f32>,
    loader: &Loader<'_>,
    params: &TrainParams,
    adam: &mut AdamState,
    grads: &mut [f32],
) -> Result<StepLog, GptError> {
    let step = adam.t;
    let mut rng = step_rng(params.seed, step);
    let batch = loader.sample(params.batch_size, &mut rng);
    let rows: Vec<&[TokenId]> = (0..batch.rows()).map(|b| batch.input_row(b)).collect();
    let targets: Vec<&[Option<TokenId>]> = (0..batch.rows()).map(|b| batch.target_row(b)).collect();
    grads.fill(0.0);
    let loss = model.loss_and_grad(&rows, &targets, grads, Some(&mut rng))?;
    if !loss.is_finite() {
        return Err(GptError::NonFiniteLoss { step, loss });
    }
    let norm = Float::sqrt(grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>());
    if !norm.is_finite() {
        return Err(GptError::NonFiniteLoss { step, loss: norm });
    }
    let clip = if params.grad_clip > 0.0 && norm > params.grad_clip { params.grad_clip / norm } else { 1.0 };
    let lr = params.lr_at(step);
    let t = (step + 1) as i32;
    let bc1 = 1.0 - Float::powi(params.beta1, t);
    let bc2 = 1.0 - Float::powi(params.beta2, t);
    let (b1, b2) = (params.beta1 as f32, params.beta2 as f32);
    let step_size = (lr / bc1) as f32;
    let inv_sqrt_bc2 = (1.0 / Float::sqrt(bc2)) as f32;
    let eps = params.eps as f32;
    let clip = clip as f32;
    let decay = (lr * params.weight_decay) as f32;
    let layout = model.layout().clone();
    let p = model.params_mut();
    for info in layout.tensors() {
        let wd = if info.is_matrix() { decay } else { 0.0 };
        for i in info.offset..info.offset + info.len() {
            let g = grads[i] * clip;
            adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * g;
            adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * g * g;
            p[i] -= wd * p[i];
            p[i] -= step_size * adam.m[i] / (Float::sqrt(adam.v[i]) * inv_sqrt_bc2 + eps);
        }
    }
    adam.t += 1;
    Ok(StepLog { step, loss, lr, grad_norm: norm })
}

/// Trains until `adam.t == params.steps`, reporting each step to `on_step`.
/// Returning `false` from the callback stops early.
pub fn train<F: FnMut(&StepLog) -> bool>(
    model: &mut Model<f32>,
    corpus: &[Vec<TokenId>],
    params: &TrainParams,
    adam: &mut AdamState,
    mut on_step: F,
) -> Result<Vec<StepLog>, GptError> {
    params.validate()?;
    if adam.m.len() != model.params().len() || adam.v.len() != model.params().len() {
        return Err(GptError::Config("optimizer state does not match the model".into()));
    }
    let loader = Loader::new(corpus, model.config().block_size)?;
    let mut grads = vec![0.0f32; model.params().len()];
    let mut logs = Vec::new();
    while adam.t < params.steps {
        let log = train_step(model, &loader, params, adam, &mut grads)?;
        logs.push(log);
        if !on_step(&log) {
            break;
        }
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let p = TrainParams { steps: 1000, warmup: 100, lr: 1e-3, min_lr: 1e-4, ..Default::default() };
        assert!((p.lr_at(0) - 1e-5).abs() < 1e-12);
        assert!((p.lr_at(99) - 1e-3).abs() < 1e-12);
        assert!((p.lr_at(100) - 1e-3).abs() < 1e-12);
        assert!((p.lr_at(550) - 5.5e-4).abs() < 1e-9);
        assert!((p.lr_at(1000) - 1e-4).abs() < 1e-12);
        for s in 100..999 {
            assert!(p.lr_at(s + 1) <= p.lr_at(s));
        }
    }
}
