//! Prediction dumps as JSON lines: one header record, then one record per
//! chunk in video order.
//!
//! ```text
//! {"chunk_size":6,"fps":30.0,"decoder_steps":8,"classes":21}
//! {"video":"v1","chunk":0,"present":[...],"anticipated":[[...],...]}
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{DetectionOutput, TrnConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpHeader {
    pub chunk_size: usize,
    pub fps: f64,
    pub decoder_steps: usize,
    pub classes: usize,
}

impl DumpHeader {
    pub fn from_config(config: &TrnConfig) -> Self {
        Self {
            chunk_size: config.chunk_size,
            fps: config.fps,
            decoder_steps: config.decoder_steps,
            classes: config.classes(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    video: String,
    chunk: usize,
    present: Vec<f64>,
    anticipated: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoPredictions {
    pub id: String,
    pub outputs: Vec<DetectionOutput>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionDump {
    pub header: DumpHeader,
    pub videos: Vec<VideoPredictions>,
}

impl PredictionDump {
    pub fn new(header: DumpHeader) -> Self {
        Self {
            header,
            videos: Vec::new(),
        }
    }

    pub fn push_video(
        &mut self,
        id: impl Into<String>,
        outputs: Vec<DetectionOutput>,
    ) -> Result<(), EvalError> {
        let id = id.into();
        for (t, o) in outputs.iter().enumerate() {
            self.check(&id, t, &o.present, &o.anticipated)?;
        }
        self.videos.push(VideoPredictions { id, outputs });
        Ok(())
    }

    fn check(
        &self,
        id: &str,
        t: usize,
        present: &[f64],
        anticipated: &[Vec<f64>],
    ) -> Result<(), EvalError> {
        let bad = |msg: String| Err(EvalError::Dump(format!("video {id} chunk {t}: {msg}")));
        if anticipated.len() != self.header.decoder_steps {
            return bad(format!(
                "{} anticipated distributions, expected {}",
                anticipated.len(),
                self.header.decoder_steps
            ));
        }
        for d in std::iter::once(present).chain(anticipated.iter().map(Vec::as_slice)) {
            if d.len() != self.header.classes {
                return bad(format!(
                    "distribution of length {}, expected {}",
                    d.len(),
                    self.header.classes
                ));
            }
            if d.iter().any(|v| !v.is_finite()) {
                return bad("non-finite score".into());
            }
        }
        Ok(())
    }

    pub fn video(&self, id: &str) -> Option<&VideoPredictions> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string(&self.header).expect("header serializes");
        s.push('\n');
        for v in &self.videos {
            for (t, o) in v.outputs.iter().enumerate() {
                let rec = Record {
                    video: v.id.clone(),
                    chunk: t,
                    present: o.present.clone(),
                    anticipated: o.anticipated.clone(),
                };
                let _ = writeln!(
                    s,
                    "{}",
                    serde_json::to_string(&rec).expect("record serializes")
                );
            }
        }
        s
    }

    /// Parses a dump. Records of one video must be contiguous with chunk
    /// indices counting up from 0.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| EvalError::Dump("empty dump".into()))?;
        let header: DumpHeader = serde_json::from_str(first)
            .map_err(|e| EvalError::Dump(format!("line 1: bad header: {e}")))?;
        if header.classes < 2
            || header.decoder_steps == 0
            || header.chunk_size == 0
            || !(header.fps > 0.0)
        {
            return Err(EvalError::Dump(
                "header fields must be positive, classes ≥ 2".into(),
            ));
        }
        let mut dump = PredictionDump::new(header);
        for (i, line) in lines {
            let rec: Record = serde_json::from_str(line)
                .map_err(|e| EvalError::Dump(format!("line {}: {e}", i + 1)))?;
            dump.check(&rec.video, rec.chunk, &rec.present, &rec.anticipated)?;
            let out = DetectionOutput {
                present: rec.present,
                anticipated: rec.anticipated,
                predicted_features: Vec::new(),
            };
            match dump.videos.last_mut() {
                Some(v) if v.id == rec.video => {
                    if rec.chunk != v.outputs.len() {
                        return Err(EvalError::Dump(format!(
                            "line {}: video {} chunk {} out of order",
                            i + 1,
                            rec.video,
                            rec.chunk
                        )));
                    }
                    v.outputs.push(out);
                }
                _ => {
                    if rec.chunk != 0 || dump.video(&rec.video).is_some() {
                        return Err(EvalError::Dump(format!(
                            "line {}: records of video {} are not contiguous from chunk 0",
                            i + 1,
                            rec.video
                        )));
                    }
                    dump.videos.push(VideoPredictions {
                        id: rec.video,
                        outputs: vec![out],
                    });
                }
            }
        }
        Ok(dump)
    }

    pub fn write(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_text())
            .map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
