use serde::{Deserialize, Serialize};

use super::{map_over_samples, EvalError, MapResult, PredictionDump};
use crate::dataio::{ambiguous_mask, chunk_labels, GroundTruth};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Drop chunks whose center lies in an ambiguous interval.
    pub exclude_ambiguous: bool,
    /// Count each chunk once per frame instead of once.
    pub expand_frames: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            exclude_ambiguous: true,
            expand_frames: false,
        }
    }
}

struct VideoTargets {
    labels: Vec<usize>,
    excluded: Vec<bool>,
}

fn targets(
    dump: &PredictionDump,
    gt: &GroundTruth,
    opts: EvalOptions,
) -> Result<Vec<VideoTargets>, EvalError> {
    let h = dump.header;
    dump.videos
        .iter()
        .map(|v| {
            if !gt.videos.contains_key(&v.id) {
                log::debug!(
                    "video {} has no annotations; all chunks are background",
                    v.id
                );
            }
            let ivs = gt.intervals(&v.id);
            let n = v.outputs.len();
            let labels = chunk_labels(ivs, h.fps, h.chunk_size, n)?;
            let excluded = if opts.exclude_ambiguous {
                ambiguous_mask(ivs, h.fps, h.chunk_size, n)?
            } else {
                vec![false; n]
            };
            Ok(VideoTargets { labels, excluded })
        })
        .collect()
}

fn repeat(opts: EvalOptions, chunk_size: usize) -> usize {
    if opts.expand_frames {
        chunk_size
    } else {
        1
    }
}

/// `(present distribution, label)` pool across all videos.
pub fn detection_pool<'a>(
    dump: &'a PredictionDump,
    gt: &GroundTruth,
    opts: EvalOptions,
) -> Result<Vec<(&'a [f64], usize)>, EvalError> {
    let reps = repeat(opts, dump.header.chunk_size);
    let mut pool = Vec::new();
    for (v, tg) in dump.videos.iter().zip(targets(dump, gt, opts)?) {
        for (t, o) in v.outputs.iter().enumerate() {
            if !tg.excluded[t] {
                pool.extend(std::iter::repeat_n((&o.present[..], tg.labels[t]), reps));
            }
        }
    }
    Ok(pool)
}

/// Pairs of the step-`step` prediction emitted at chunk `t` with the label
/// of chunk `t + step`; pairs past the video end are dropped.
pub fn anticipation_pool<'a>(
    dump: &'a PredictionDump,
    gt: &GroundTruth,
    step: usize,
    opts: EvalOptions,
) -> Result<Vec<(&'a [f64], usize)>, EvalError> {
    let steps = dump.header.decoder_steps;
    if step == 0 || step > steps {
        return Err(EvalError::StepOutOfRange { step, steps });
    }
    let reps = repeat(opts, dump.header.chunk_size);
    let mut pool = Vec::new();
    for (v, tg) in dump.videos.iter().zip(targets(dump, gt, opts)?) {
        for (t, o) in v.outputs.iter().enumerate() {
            let target = t + step;
            if target < tg.labels.len() && !tg.excluded[target] {
                pool.extend(std::iter::repeat_n(
                    (&o.anticipated[step - 1][..], tg.labels[target]),
                    reps,
                ));
            }
        }
    }
    Ok(pool)
}

pub fn per_frame_map(
    dump: &PredictionDump,
    gt: &GroundTruth,
    opts: EvalOptions,
) -> Result<MapResult, EvalError> {
    map_over_samples(detection_pool(dump, gt, opts)?, dump.header.classes)
}

pub fn anticipation_map(
    dump: &PredictionDump,
    gt: &GroundTruth,
    step: usize,
    opts: EvalOptions,
) -> Result<MapResult, EvalError> {
    map_over_samples(
        anticipation_pool(dump, gt, step, opts)?,
        dump.header.classes,
    )
}

/// Encoder and per-step mAP, `None` where no class could be scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpScores {
    pub encoder: Option<f64>,
    pub steps: Vec<Option<f64>>,
}

fn optional(r: Result<MapResult, EvalError>) -> Result<Option<f64>, EvalError> {
    match r {
        Ok(m) => Ok(Some(m.map)),
        Err(EvalError::NoPositives) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn score_dump(
    dump: &PredictionDump,
    gt: &GroundTruth,
    opts: EvalOptions,
) -> Result<DumpScores, EvalError> {
    Ok(DumpScores {
        encoder: optional(per_frame_map(dump, gt, opts))?,
        steps: (1..=dump.header.decoder_steps)
            .map(|i| optional(anticipation_map(dump, gt, i, opts)))
            .collect::<Result<_, _>>()?,
    })
}
