//! Small decoder-only transformer over geohash tokens: model, batching,
//! training and sampling.

mod generate;
mod gradcheck;
mod loader;
mod model;
mod scalar;
mod train;

pub use generate::{generate, generate_many, sample_token, temperature_probs};
pub use gradcheck::{grad_check, GradCheckReport, REL_ERROR_FLOOR};
pub use loader::{eligible_offsets, sample_batch, Batch, Loader};
pub use model::{loss, Layout, Logits, Model, ModelConfig, TensorInfo, HEAD_CHUNK, INIT_STD, LN_EPS};
pub use scalar::Scalar;
pub use train::{step_rng, train, train_step, AdamState, StepLog, TrainParams};

use crate::geocodec::CodecConfig;

pub const DEFAULT_TEMPERATURE: f64 = 0.92;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub temperature: f64,
    /// Forecasts drawn per prompt.
    pub k_samples: usize,
    /// Tokens generated per forecast.
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { temperature: DEFAULT_TEMPERATURE, k_samples: 16, max_steps: 60, seed: 1337 }
    }
}

/// Everything needed to forecast from, or resume training of, a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub codec: CodecConfig,
    /// Resampling interval in seconds.
    pub dt: f64,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    /// Completed optimizer steps.
    pub fn step(&self) -> u64 {
        self.adam.as_ref().map_or(0, |a| a.t)
    }
}
