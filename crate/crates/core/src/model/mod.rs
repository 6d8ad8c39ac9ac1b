//! The recurrent encoder/decoder cell and its stream-fusion front-ends.
//!
//! Per chunk the data flow is: fuse streams → embed (linear + ReLU) →
//! decoder rollout seeded from the current encoder state → future gate
//! (mean of decoder hidden states) → encoder step on `[embed, future]`.

mod config;
mod forward;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{NumericError, Vector};

pub use config::{ChunkInput, FusionVariant, Stream, StreamDims, TrnConfig, POSE_FEATURE_DIM};
pub(crate) use forward::{chunk_forward, forward_tapes, ChunkTape};
pub use forward::{decoder_rollout, encoder_step, fuse, future_gate, trn_forward, DecoderRollout};
pub use params::{Gradients, TensorRef, TrnParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("chunk is missing the {0} stream required by the fusion variant")]
    MissingStream(Stream),
    #[error("chunk provides the {0} stream, which the configuration does not use")]
    UnexpectedStream(Stream),
    #[error("{stream} stream has dimension {found}, configuration expects {expected}")]
    StreamDim {
        stream: Stream,
        expected: usize,
        found: usize,
    },
    #[error("decoder step {step} out of range 1..={decoder_steps}")]
    StepOutOfRange { step: usize, decoder_steps: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Encoder hidden and cell state carried from chunk to chunk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrnState {
    pub h: Vector,
    pub c: Vector,
}

impl TrnState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.h.len()
    }
}

/// Per-chunk output: the present distribution plus one anticipated
/// distribution and predicted feature per decoder step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutput {
    pub present: Vector,
    pub anticipated: Vec<Vector>,
    pub predicted_features: Vec<Vector>,
}
