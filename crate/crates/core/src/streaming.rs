//! Chunk-at-a-time inference with carried recurrent state.

use std::sync::Arc;

use thiserror::Error;

use crate::model::{
    chunk_forward, ChunkInput, DetectionOutput, ModelError, TrnConfig, TrnParams, TrnState,
};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("detector is poisoned by an earlier failed push; call reset")]
    Poisoned,
}

/// Online detector for one video stream. Parameters are shared read-only,
/// so many detectors can serve independent streams from one model.
#[derive(Clone, Debug)]
pub struct OnlineDetector {
    config: TrnConfig,
    params: Arc<TrnParams>,
    state: TrnState,
    chunks_seen: u64,
    poisoned: bool,
}

impl OnlineDetector {
    pub fn new(config: TrnConfig, params: Arc<TrnParams>) -> Result<Self, ModelError> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self {
            state: TrnState::zeros(config.hidden_size),
            config,
            params,
            chunks_seen: 0,
            poisoned: false,
        })
    }

    pub fn config(&self) -> &TrnConfig {
        &self.config
    }

    pub fn params(&self) -> &Arc<TrnParams> {
        &self.params
    }

    pub fn state(&self) -> &TrnState {
        &self.state
    }

    pub fn chunks_seen(&self) -> u64 {
        self.chunks_seen
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    /// Consumes one chunk and advances the state once. Any error leaves the
    /// detector unusable until [`reset`](Self::reset).
    pub fn push_chunk(&mut self, input: &ChunkInput) -> Result<DetectionOutput, StreamError> {
        if self.poisoned {
            return Err(StreamError::Poisoned);
        }
        match chunk_forward(&self.params, &self.config, input, &self.state) {
            Ok(tape) => {
                self.state = tape.next_state();
                self.chunks_seen += 1;
                Ok(tape.output())
            }
            Err(e) => {
                self.poisoned = true;
                Err(e.into())
            }
        }
    }

    pub fn reset(&mut self) {
        self.state = TrnState::zeros(self.config.hidden_size);
        self.chunks_seen = 0;
        self.poisoned = false;
    }

    /// Wall-clock horizon of decoder step `step` (1-based).
    pub fn horizon_seconds(&self, step: usize) -> Result<f64, ModelError> {
        self.config.horizon_seconds(step)
    }
}
