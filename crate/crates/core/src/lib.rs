//! Online action detection with a temporal recurrent encoder/decoder.
//!
//! The crate covers the full desk-scale pipeline on precomputed per-chunk
//! features: pose normalization, stream fusion, the recurrent cell, streaming
//! inference, Adam training, per-frame mAP evaluation and the on-disk formats.

pub mod dataio;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod skeleton;
pub mod streaming;
pub mod training;

pub use model::{
    ChunkInput, DetectionOutput, FusionVariant, ModelError, Stream, StreamDims, TrnConfig,
    TrnParams, TrnState,
};
pub use streaming::{OnlineDetector, StreamError};
pub use training::{Checkpoint, TrainConfig};
