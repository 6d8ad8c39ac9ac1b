use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// How the per-chunk streams are combined before entering the recurrent cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FusionVariant {
    /// A single stream, fed to the embedding layer as-is.
    OneStream,
    /// Appearance and motion, concatenated and fused by a linear+ReLU layer.
    TwoStream,
    /// Appearance with pose appended, plus motion, fused like `TwoStream`.
    FusedTwoStream,
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionVariant::OneStream => "ONE_STREAM",
            FusionVariant::TwoStream => "TWO_STREAM",
            FusionVariant::FusedTwoStream => "FUSED_TWO_STREAM",
        })
    }
}

impl std::str::FromStr for FusionVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "ONE_STREAM" => Ok(FusionVariant::OneStream),
            "TWO_STREAM" => Ok(FusionVariant::TwoStream),
            "FUSED_TWO_STREAM" => Ok(FusionVariant::FusedTwoStream),
            other => Err(format!("unknown fusion variant '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Appearance,
    Motion,
    Pose,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Appearance, Stream::Motion, Stream::Pose];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Appearance => "appearance",
            Stream::Motion => "motion",
            Stream::Pose => "pose",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Feature dimension of each configured stream; `None` means the stream is unused.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDims {
    #[serde(default)]
    pub appearance: Option<usize>,
    #[serde(default)]
    pub motion: Option<usize>,
    #[serde(default)]
    pub pose: Option<usize>,
}

impl StreamDims {
    pub fn get(&self, stream: Stream) -> Option<usize> {
        match stream {
            Stream::Appearance => self.appearance,
            Stream::Motion => self.motion,
            Stream::Pose => self.pose,
        }
    }

    pub fn active(&self) -> Vec<Stream> {
        Stream::ALL
            .into_iter()
            .filter(|s| self.get(*s).is_some())
            .collect()
    }
}

pub const POSE_FEATURE_DIM: usize = 134;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrnConfig {
    pub streams: StreamDims,
    pub fusion: FusionVariant,
    #[serde(default = "defaults::hidden_size")]
    pub hidden_size: usize,
    #[serde(default = "defaults::decoder_steps")]
    pub decoder_steps: usize,
    /// Annotated action classes, excluding background.
    #[serde(default = "defaults::num_actions")]
    pub num_actions: usize,
    #[serde(default = "defaults::seq_len")]
    pub seq_len: usize,
    #[serde(default = "defaults::chunk_size")]
    pub chunk_size: usize,
    #[serde(default = "defaults::fps")]
    pub fps: f64,
}

pub(crate) mod defaults {
    pub fn hidden_size() -> usize {
        512
    }
    pub fn decoder_steps() -> usize {
        8
    }
    pub fn num_actions() -> usize {
        20
    }
    pub fn seq_len() -> usize {
        64
    }
    pub fn chunk_size() -> usize {
        6
    }
    pub fn fps() -> f64 {
        30.0
    }
}

impl TrnConfig {
    /// Defaults for everything except the streams and fusion variant.
    pub fn new(fusion: FusionVariant, streams: StreamDims) -> Self {
        Self {
            streams,
            fusion,
            hidden_size: defaults::hidden_size(),
            decoder_steps: defaults::decoder_steps(),
            num_actions: defaults::num_actions(),
            seq_len: defaults::seq_len(),
            chunk_size: defaults::chunk_size(),
            fps: defaults::fps(),
        }
    }

    /// Classes including background at index 0.
    pub fn classes(&self) -> usize {
        self.num_actions + 1
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.hidden_size == 0 {
            return bad("hidden_size must be at least 1".into());
        }
        if self.decoder_steps == 0 {
            return bad("decoder_steps must be at least 1".into());
        }
        if self.num_actions == 0 {
            return bad("num_actions must be at least 1 (classes >= 2)".into());
        }
        if self.chunk_size == 0 {
            return bad("chunk_size must be at least 1".into());
        }
        if self.seq_len == 0 {
            return bad("seq_len must be at least 1".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        for s in Stream::ALL {
            if self.streams.get(s) == Some(0) {
                return bad(format!("{s} dimension must be positive"));
            }
        }
        let active = self.streams.active();
        let required: &[Stream] = match self.fusion {
            FusionVariant::OneStream => {
                if active.len() != 1 {
                    return bad(format!(
                        "ONE_STREAM needs exactly one stream, {} configured",
                        active.len()
                    ));
                }
                return Ok(());
            }
            FusionVariant::TwoStream => &[Stream::Appearance, Stream::Motion],
            FusionVariant::FusedTwoStream => &[Stream::Appearance, Stream::Motion, Stream::Pose],
        };
        if active != required {
            return bad(format!(
                "{} needs streams {:?}, configured {:?}",
                self.fusion, required, active
            ));
        }
        Ok(())
    }

    /// Streams consumed per chunk, in concatenation order.
    pub fn required_streams(&self) -> Vec<Stream> {
        match self.fusion {
            FusionVariant::OneStream => self.streams.active(),
            FusionVariant::TwoStream => vec![Stream::Appearance, Stream::Motion],
            // Pose joins the appearance slot, so it precedes motion.
            FusionVariant::FusedTwoStream => vec![Stream::Appearance, Stream::Pose, Stream::Motion],
        }
    }

    /// Width of the concatenation fed to the fusion layer, if there is one.
    pub fn fusion_input_dim(&self) -> Option<usize> {
        match self.fusion {
            FusionVariant::OneStream => None,
            _ => Some(
                self.required_streams()
                    .iter()
                    .filter_map(|s| self.streams.get(*s))
                    .sum(),
            ),
        }
    }

    /// Width of the vector entering the embedding layer.
    pub fn embed_input_dim(&self) -> usize {
        match self.fusion {
            FusionVariant::OneStream => self
                .streams
                .active()
                .first()
                .and_then(|s| self.streams.get(*s))
                .unwrap_or(0),
            _ => self.hidden_size,
        }
    }

    /// Seconds covered by one chunk.
    pub fn chunk_seconds(&self) -> f64 {
        self.chunk_size as f64 / self.fps
    }

    /// Anticipation horizon of decoder step `step` (1-based): `step · chunk_size / fps`.
    pub fn horizon_seconds(&self, step: usize) -> Result<f64, ModelError> {
        if step == 0 || step > self.decoder_steps {
            return Err(ModelError::StepOutOfRange {
                step,
                decoder_steps: self.decoder_steps,
            });
        }
        Ok(step as f64 * self.chunk_size as f64 / self.fps)
    }
}

/// Stream vectors for one chunk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChunkInput {
    pub appearance: Option<Vec<f64>>,
    pub motion: Option<Vec<f64>>,
    pub pose: Option<Vec<f64>>,
}

impl ChunkInput {
    pub fn get(&self, stream: Stream) -> Option<&[f64]> {
        match stream {
            Stream::Appearance => self.appearance.as_deref(),
            Stream::Motion => self.motion.as_deref(),
            Stream::Pose => self.pose.as_deref(),
        }
    }

    pub fn set(&mut self, stream: Stream, v: Vec<f64>) {
        match stream {
            Stream::Appearance => self.appearance = Some(v),
            Stream::Motion => self.motion = Some(v),
            Stream::Pose => self.pose = Some(v),
        }
    }

    pub fn with(mut self, stream: Stream, v: Vec<f64>) -> Self {
        self.set(stream, v);
        self
    }
}
