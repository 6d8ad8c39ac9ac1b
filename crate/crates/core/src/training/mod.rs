//! Supervised training: joint encoder/decoder cross-entropy, exact BPTT
//! gradients, Adam with decoupled weight decay, and a seeded epoch loop.

mod adam;
mod checkpoint;
mod loss;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalError;
use crate::model::ModelError;
use crate::numeric::NumericError;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use loss::{
    decoder_pair_count, loss_from_outputs, sequence_loss, sequence_loss_and_gradient,
    LossBreakdown, LossWeights,
};
pub use trainer::{
    evaluate, split_windows, train, train_with, EpochMetrics, HeldOutMetrics, LabeledVideo,
    TrainOutcome,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{labels} labels for {chunks} chunks")]
    LabelCount { labels: usize, chunks: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite gradient in {tensor}[{index}]")]
    NonFiniteGradient { tensor: &'static str, index: usize },
    #[error("gradient tensors do not match parameter shapes")]
    GradientShape,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Optimization hyperparameters. Defaults: lr = wd = 5e-4, batch 2,
/// windows of 64 chunks, 8 decoder steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    pub decoder_steps: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            weight_decay: 5e-4,
            batch_size: 2,
            seq_len: 64,
            decoder_steps: 8,
            epochs: 20,
            seed: 0,
            loss_weights: LossWeights::default(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
            ("loss_weights.encoder", self.loss_weights.encoder),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TrainError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("loss_weights.decoder", self.loss_weights.decoder),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TrainError::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(TrainError::Config(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("seq_len", self.seq_len),
            ("decoder_steps", self.decoder_steps),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}
