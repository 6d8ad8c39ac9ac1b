//! Binary per-chunk feature files.
//!
//! ```text
//! offset 0   "TRNF"
//! offset 4   u32 version (1)
//! offset 8   u32 chunk count T
//! offset 12  u32 dimension D
//! offset 16  T×D f32, row-major
//! ```
//! Everything little-endian. The payload length must equal `4·T·D` exactly.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::DataError;

pub const FEATURE_MAGIC: [u8; 4] = *b"TRNF";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_HEADER_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("file too short for a header ({0} bytes)")]
    ShortHeader(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("feature dimension must be positive")]
    ZeroDimension,
    #[error("payload truncated: header declares {expected} bytes, found {found}")]
    Truncated { expected: u128, found: usize },
    #[error("payload has trailing data: header declares {expected} bytes, found {found}")]
    TrailingData { expected: u128, found: usize },
    #[error("non-finite value at chunk {chunk}, component {component}")]
    NonFinite { chunk: usize, component: usize },
    #[error("rows have inconsistent lengths or the shape overflows the format")]
    Shape,
}

/// `T × D` matrix of 32-bit features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    chunks: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(chunks: usize, dim: usize, data: Vec<f32>) -> Result<Self, FormatError> {
        if dim == 0 {
            return Err(FormatError::ZeroDimension);
        }
        if data.len() != chunks * dim
            || u32::try_from(chunks).is_err()
            || u32::try_from(dim).is_err()
        {
            return Err(FormatError::Shape);
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite {
                chunk: i / dim,
                component: i % dim,
            });
        }
        Ok(Self { chunks, dim, data })
    }

    /// Narrows `f64` rows to `f32` storage.
    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<Self, FormatError> {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(FormatError::Shape);
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(rows.len(), dim, data)
    }

    pub fn chunks(&self) -> usize {
        self.chunks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Row widened to `f64` (lossless).
    pub fn row_f64(&self, t: usize) -> Vec<f64> {
        self.row(t).iter().map(|&v| v as f64).collect()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn truncate(&mut self, chunks: usize) {
        if chunks < self.chunks {
            self.chunks = chunks;
            self.data.truncate(chunks * self.dim);
        }
    }
}

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * m.data.len());
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.chunks as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a complete feature file. Checks run in header order, and the
/// payload size is verified before anything is allocated.
pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix, FormatError> {
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(FormatError::ShortHeader(bytes.len()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != FEATURE_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let chunks = word(8) as usize;
    let dim = word(12) as usize;
    if dim == 0 {
        return Err(FormatError::ZeroDimension);
    }
    let expected = 4u128 * chunks as u128 * dim as u128;
    let found = bytes.len() - FEATURE_HEADER_LEN;
    if (found as u128) < expected {
        return Err(FormatError::Truncated { expected, found });
    }
    if (found as u128) > expected {
        return Err(FormatError::TrailingData { expected, found });
    }
    let data: Vec<f32> = bytes[FEATURE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(chunks, dim, data)
}

pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<(), DataError> {
    let mut f = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    f.write_all(&encode_features(m))
        .map_err(|e| DataError::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_features(&bytes).map_err(|source| DataError::Format {
        path: path.display().to_string(),
        source,
    })
}
