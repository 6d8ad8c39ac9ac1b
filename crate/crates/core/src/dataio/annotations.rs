//! Temporal annotations, the class map, and chunk labeling.
//!
//! Ground-truth file: one `video_id<TAB>class_name<TAB>start_s<TAB>end_s` per
//! line, `#` comments and blank lines ignored. The class name `Ambiguous`
//! marks an interval to exclude from evaluation. Class map file: one
//! `index<TAB>name` per line, index 0 being background.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

pub const BACKGROUND: usize = 0;
pub const AMBIGUOUS_NAME: &str = "Ambiguous";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    names: Vec<String>,
}

impl ClassMap {
    /// `names[0]` is the background class.
    pub fn new(names: Vec<String>) -> Result<Self, DataError> {
        if names.len() < 2 {
            return Err(DataError::ClassMap(
                "need background plus at least one action".into(),
            ));
        }
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() || n.contains('\t') {
                return Err(DataError::ClassMap(format!(
                    "invalid name for class {i}: {n:?}"
                )));
            }
            if names[..i].contains(n) {
                return Err(DataError::ClassMap(format!("duplicate class name {n:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Background plus `num_actions` generic action names.
    pub fn generic(num_actions: usize) -> Self {
        let mut names = vec!["Background".to_string()];
        names.extend((1..=num_actions).map(|i| format!("Action{i:02}")));
        Self { names }
    }

    /// Classes including background.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.names.len() - 1
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (idx, name) = line.split_once('\t').ok_or_else(|| {
                DataError::parse("class map", lineno + 1, "expected index<TAB>name")
            })?;
            let idx: usize = idx.trim().parse().map_err(|_| {
                DataError::parse("class map", lineno + 1, format!("bad index {idx:?}"))
            })?;
            entries.push((idx, name.trim().to_string()));
        }
        entries.sort_by_key(|e| e.0);
        for (expected, (idx, _)) in entries.iter().enumerate() {
            if *idx != expected {
                return Err(DataError::ClassMap(format!(
                    "class indices must be contiguous from 0, missing {expected}"
                )));
            }
        }
        Self::new(entries.into_iter().map(|e| e.1).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, n) in self.names.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{n}");
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        Self::parse(&super::read_text(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalLabel {
    /// Action class index in `1..=K`.
    Action(usize),
    Ambiguous,
}

/// Annotated time span `[start, end)` in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub label: IntervalLabel,
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn action(class: usize, start: f64, end: f64) -> Self {
        Self {
            label: IntervalLabel::Action(class),
            start,
            end,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if !(self.start.is_finite() && self.end.is_finite()) || self.start >= self.end {
            return Err(DataError::Interval(format!(
                "interval [{}, {}) must satisfy start < end",
                self.start, self.end
            )));
        }
        if self.label == IntervalLabel::Action(BACKGROUND) {
            return Err(DataError::Interval(
                "background cannot be annotated as an action".into(),
            ));
        }
        Ok(())
    }
}

/// Annotations per video id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub videos: BTreeMap<String, Vec<Interval>>,
}

impl GroundTruth {
    pub fn intervals(&self, video: &str) -> &[Interval] {
        self.videos.get(video).map_or(&[], Vec::as_slice)
    }

    pub fn parse(text: &str, classes: &ClassMap) -> Result<Self, DataError> {
        let mut gt = GroundTruth::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(DataError::parse(
                    "ground truth",
                    lineno + 1,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let label = if fields[1].eq_ignore_ascii_case(AMBIGUOUS_NAME) {
                IntervalLabel::Ambiguous
            } else {
                match classes.index_of(fields[1]) {
                    Some(BACKGROUND) | None => {
                        return Err(DataError::parse(
                            "ground truth",
                            lineno + 1,
                            format!("unknown action class {:?}", fields[1]),
                        ))
                    }
                    Some(i) => IntervalLabel::Action(i),
                }
            };
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    DataError::parse("ground truth", lineno + 1, format!("bad time {s:?}"))
                })
            };
            let iv = Interval {
                label,
                start: num(fields[2])?,
                end: num(fields[3])?,
            };
            iv.validate()
                .map_err(|e| DataError::parse("ground truth", lineno + 1, e.to_string()))?;
            gt.videos.entry(fields[0].to_string()).or_default().push(iv);
        }
        Ok(gt)
    }

    pub fn to_text(&self, classes: &ClassMap) -> String {
        let mut s = String::new();
        for (video, intervals) in &self.videos {
            for iv in intervals {
                let name = match iv.label {
                    IntervalLabel::Ambiguous => AMBIGUOUS_NAME,
                    IntervalLabel::Action(c) => classes.name(c).unwrap_or("?"),
                };
                let _ = writeln!(s, "{video}\t{name}\t{}\t{}", iv.start, iv.end);
            }
        }
        s
    }

    pub fn read(path: &Path, classes: &ClassMap) -> Result<Self, DataError> {
        Self::parse(&super::read_text(path)?, classes)
    }
}

/// Timestamp of the center frame of chunk `index`.
pub fn chunk_center_seconds(index: usize, chunk_size: usize, fps: f64) -> f64 {
    (index * chunk_size + chunk_size / 2) as f64 / fps
}

fn clipped(
    intervals: &[Interval],
    fps: f64,
    chunk_size: usize,
    len: usize,
) -> Result<Vec<Interval>, DataError> {
    let duration = (len * chunk_size) as f64 / fps;
    let mut out = Vec::with_capacity(intervals.len());
    for iv in intervals {
        iv.validate()?;
        if iv.start < 0.0 || iv.end > duration {
            log::warn!(
                "interval [{}, {}) extends outside the video [0, {duration}); clipping",
                iv.start,
                iv.end
            );
        }
        out.push(Interval {
            start: iv.start.max(0.0),
            end: iv.end.min(duration),
            ..*iv
        });
    }
    Ok(out)
}

/// Class index per chunk: the action interval covering the chunk's
/// center-frame timestamp, earliest start winning on overlap, background
/// otherwise. Ambiguous intervals do not label chunks.
pub fn chunk_labels(
    intervals: &[Interval],
    fps: f64,
    chunk_size: usize,
    len: usize,
) -> Result<Vec<usize>, DataError> {
    if chunk_size == 0 || !(fps > 0.0) {
        return Err(DataError::Interval(format!(
            "invalid chunk_size {chunk_size} / fps {fps}"
        )));
    }
    let ivs = clipped(intervals, fps, chunk_size, len)?;
    Ok((0..len)
        .map(|j| {
            let t = chunk_center_seconds(j, chunk_size, fps);
            let mut best: Option<&Interval> = None;
            for iv in &ivs {
                if let IntervalLabel::Action(_) = iv.label {
                    if iv.start <= t && t < iv.end && best.is_none_or(|b| iv.start < b.start) {
                        best = Some(iv);
                    }
                }
            }
            match best.map(|b| b.label) {
                Some(IntervalLabel::Action(c)) => c,
                _ => BACKGROUND,
            }
        })
        .collect())
}

/// `true` for chunks whose center falls inside an ambiguous interval.
pub fn ambiguous_mask(
    intervals: &[Interval],
    fps: f64,
    chunk_size: usize,
    len: usize,
) -> Result<Vec<bool>, DataError> {
    let ivs = clipped(intervals, fps, chunk_size, len)?;
    Ok((0..len)
        .map(|j| {
            let t = chunk_center_seconds(j, chunk_size, fps);
            ivs.iter()
                .any(|iv| iv.label == IntervalLabel::Ambiguous && iv.start <= t && t < iv.end)
        })
        .collect())
}
