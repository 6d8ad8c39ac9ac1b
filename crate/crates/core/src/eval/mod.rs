//! Per-frame mAP for detection and anticipation, prediction dumps and
//! result tables.

mod ap;
mod dump;
mod metrics;
mod report;

use thiserror::Error;

use crate::dataio::DataError;

pub use ap::{average_precision, map_over_samples, rank_order, MapResult, TIE_BREAK_SEED};
pub use dump::{DumpHeader, PredictionDump, VideoPredictions};
pub use metrics::{
    anticipation_map, anticipation_pool, detection_pool, per_frame_map, score_dump, DumpScores,
    EvalOptions,
};
pub use report::{render_report, ReferenceRow, ReportRow, PUBLISHED_GRID_SECONDS, REFERENCE_ROWS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no positive samples")]
    NoPositives,
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("distribution has {found} classes, expected {expected}")]
    Classes { expected: usize, found: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("step {step} out of range 1..={steps}")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("prediction dump: {0}")]
    Dump(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Data(#[from] DataError),
}
