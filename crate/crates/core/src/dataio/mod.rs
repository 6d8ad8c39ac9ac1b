//! File formats, dataset manifests and the synthetic generator.

mod annotations;
mod features;
mod manifest;
mod synthetic;

use std::path::Path;

use thiserror::Error;

pub use annotations::{
    ambiguous_mask, chunk_center_seconds, chunk_labels, ClassMap, GroundTruth, Interval,
    IntervalLabel, AMBIGUOUS_NAME, BACKGROUND,
};
pub use features::{
    decode_features, encode_features, read_features, write_features, FeatureMatrix, FormatError,
    FEATURE_HEADER_LEN, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use manifest::{
    load_dataset, load_video_streams, manifest_base, Dataset, Manifest, ManifestVideo, Split,
    StreamFile, VideoData, MANIFEST_VERSION,
};
pub use synthetic::{generate, write_dataset, SyntheticDataset, SyntheticSpec, SyntheticVideo};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },
    #[error("{what} line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },
    #[error("class map: {0}")]
    ClassMap(String),
    #[error("interval: {0}")]
    Interval(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("synthetic spec: {0}")]
    Synthetic(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub(crate) fn parse(what: &'static str, line: usize, msg: impl Into<String>) -> Self {
        DataError::Parse {
            what,
            line,
            msg: msg.into(),
        }
    }

    /// `true` for failures to reach the file system, as opposed to bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, DataError::Io { .. })
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}
