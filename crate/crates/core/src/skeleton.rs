//! 2D body+hand keypoints to normalized 134-dimensional pose features.
//!
//! Keypoints follow the BODY_25 layout (25 body/foot points) followed by 21
//! left-hand and 21 right-hand points. Coordinates are re-centered on the mid
//! hip and divided by the mid-hip to shoulder-midpoint distance; confidences
//! select the actor but are not part of the feature.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::model::POSE_FEATURE_DIM;
use crate::numeric::Vector;

pub const BODY_KEYPOINTS: usize = 25;
pub const HAND_KEYPOINTS: usize = 21;
pub const NUM_KEYPOINTS: usize = BODY_KEYPOINTS + 2 * HAND_KEYPOINTS;
pub const MID_HIP: usize = 8;
pub const R_SHOULDER: usize = 2;
pub const L_SHOULDER: usize = 5;
/// Below this shoulder distance (pixels) a pose is treated as degenerate.
pub const MIN_SCALE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("person has {0} keypoints, expected {NUM_KEYPOINTS}")]
    KeypointCount(usize),
    #[error("keypoint array {field} has {found} numbers, expected {expected}")]
    ArrayLength {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("malformed keypoint document: {0}")]
    Json(String),
    #[error("keypoint file name {0:?} does not match <video>_<12-digit frame>_keypoints.json")]
    FileName(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Why a person could not be normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneratePose {
    MissingMidHip,
    MissingShoulders,
    ZeroScale,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_detected(&self) -> bool {
        self.confidence > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Person {
    keypoints: Vec<Keypoint>,
}

impl Person {
    pub fn new(keypoints: Vec<Keypoint>) -> Result<Self, SkeletonError> {
        if keypoints.len() != NUM_KEYPOINTS {
            return Err(SkeletonError::KeypointCount(keypoints.len()));
        }
        Ok(Self { keypoints })
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn keypoints_mut(&mut self) -> &mut [Keypoint] {
        &mut self.keypoints
    }

    pub fn confidence_sum(&self) -> f64 {
        self.keypoints.iter().map(|k| k.confidence).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseFrame {
    pub people: Vec<Person>,
}

/// The person with the largest total keypoint confidence; the first listed
/// wins ties.
pub fn select_actor(frame: &PoseFrame) -> Option<&Person> {
    let mut best: Option<&Person> = None;
    for p in &frame.people {
        if best.is_none_or(|b| p.confidence_sum() > b.confidence_sum()) {
            best = Some(p);
        }
    }
    best
}

/// Center on the mid hip and scale by the distance from the mid hip to the
/// shoulder midpoint. Undetected keypoints map to exact zeros.
///
/// When only one shoulder is detected, it stands in for the midpoint.
pub fn normalize_pose(person: &Person) -> Result<Vector, DegeneratePose> {
    let kp = &person.keypoints;
    let hip = kp[MID_HIP];
    if !hip.is_detected() {
        return Err(DegeneratePose::MissingMidHip);
    }
    let (r, l) = (kp[R_SHOULDER], kp[L_SHOULDER]);
    let (sx, sy) = match (r.is_detected(), l.is_detected()) {
        (true, true) => ((r.x + l.x) / 2.0, (r.y + l.y) / 2.0),
        (true, false) => (r.x, r.y),
        (false, true) => (l.x, l.y),
        (false, false) => return Err(DegeneratePose::MissingShoulders),
    };
    let scale = (sx - hip.x).hypot(sy - hip.y);
    if !(scale >= MIN_SCALE) {
        return Err(DegeneratePose::ZeroScale);
    }
    let mut out = vec![0.0; POSE_FEATURE_DIM];
    for (k, p) in kp.iter().enumerate() {
        if p.is_detected() {
            out[2 * k] = (p.x - hip.x) / scale;
            out[2 * k + 1] = (p.y - hip.y) / scale;
        }
    }
    Ok(out)
}

/// Normalized feature of the frame's selected actor, if any.
pub fn frame_feature(frame: &PoseFrame) -> Option<Vector> {
    select_actor(frame).and_then(|p| normalize_pose(p).ok())
}

/// Feature of the chunk's center frame `⌊n/2⌋`, falling back to the nearest
/// frame with a valid pose (earlier frame on equal distance), else zeros.
pub fn pose_chunk_feature(frames: &[PoseFrame]) -> Vector {
    let center = frames.len() / 2;
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by_key(|&i| (i.abs_diff(center), i));
    order
        .into_iter()
        .find_map(|i| frame_feature(&frames[i]))
        .unwrap_or_else(|| vec![0.0; POSE_FEATURE_DIM])
}

#[derive(Deserialize)]
struct OpenPoseDoc {
    people: Vec<OpenPosePerson>,
}

#[derive(Deserialize)]
struct OpenPosePerson {
    pose_keypoints_2d: Vec<f64>,
    #[serde(default)]
    hand_left_keypoints_2d: Vec<f64>,
    #[serde(default)]
    hand_right_keypoints_2d: Vec<f64>,
}

fn triples(
    field: &'static str,
    v: &[f64],
    count: usize,
    out: &mut Vec<Keypoint>,
) -> Result<(), SkeletonError> {
    // Missing hand arrays are common in detector output; treat as undetected.
    if v.is_empty() && field != "pose_keypoints_2d" {
        out.extend(std::iter::repeat_n(Keypoint::default(), count));
        return Ok(());
    }
    if v.len() != 3 * count {
        return Err(SkeletonError::ArrayLength {
            field,
            expected: 3 * count,
            found: v.len(),
        });
    }
    out.extend(v.chunks_exact(3).map(|t| Keypoint::new(t[0], t[1], t[2])));
    Ok(())
}

/// Parses one per-frame keypoint document.
pub fn parse_keypoint_json(text: &str) -> Result<PoseFrame, SkeletonError> {
    let doc: OpenPoseDoc =
        serde_json::from_str(text).map_err(|e| SkeletonError::Json(e.to_string()))?;
    let mut people = Vec::with_capacity(doc.people.len());
    for p in doc.people {
        let mut kps = Vec::with_capacity(NUM_KEYPOINTS);
        triples(
            "pose_keypoints_2d",
            &p.pose_keypoints_2d,
            BODY_KEYPOINTS,
            &mut kps,
        )?;
        triples(
            "hand_left_keypoints_2d",
            &p.hand_left_keypoints_2d,
            HAND_KEYPOINTS,
            &mut kps,
        )?;
        triples(
            "hand_right_keypoints_2d",
            &p.hand_right_keypoints_2d,
            HAND_KEYPOINTS,
            &mut kps,
        )?;
        people.push(Person::new(kps)?);
    }
    Ok(PoseFrame { people })
}

/// Renders a frame in the same per-frame document layout.
pub fn keypoint_json(frame: &PoseFrame) -> String {
    let flat = |ks: &[Keypoint]| {
        ks.iter()
            .flat_map(|k| [k.x, k.y, k.confidence])
            .collect::<Vec<_>>()
    };
    let people: Vec<serde_json::Value> = frame
        .people
        .iter()
        .map(|p| {
            let k = p.keypoints();
            serde_json::json!({
                "pose_keypoints_2d": flat(&k[..BODY_KEYPOINTS]),
                "hand_left_keypoints_2d": flat(&k[BODY_KEYPOINTS..BODY_KEYPOINTS + HAND_KEYPOINTS]),
                "hand_right_keypoints_2d": flat(&k[BODY_KEYPOINTS + HAND_KEYPOINTS..]),
            })
        })
        .collect();
    serde_json::json!({ "version": 1.3, "people": people }).to_string()
}

/// `<video_id>_<frame 12 digits>_keypoints.json` → `(video_id, frame)`.
pub fn parse_keypoint_file_name(name: &str) -> Result<(String, u64), SkeletonError> {
    let bad = || SkeletonError::FileName(name.to_string());
    let stem = name.strip_suffix("_keypoints.json").ok_or_else(bad)?;
    let (video, frame) = stem.rsplit_once('_').ok_or_else(bad)?;
    if video.is_empty() || frame.len() != 12 || !frame.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    Ok((video.to_string(), frame.parse().map_err(|_| bad())?))
}

pub fn keypoint_file_name(video: &str, frame: u64) -> String {
    format!("{video}_{frame:012}_keypoints.json")
}

/// Loads all frames of `video` from a directory of per-frame keypoint files,
/// in frame order. Frame gaps are filled with empty frames.
pub fn read_keypoint_dir(dir: &Path, video: &str) -> Result<Vec<PoseFrame>, SkeletonError> {
    let io = |p: &Path, e: std::io::Error| SkeletonError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let entry = entry.map_err(|e| io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Ok((v, frame)) = parse_keypoint_file_name(&name) {
            if v == video {
                found.push((frame, entry.path()));
            }
        }
    }
    found.sort();
    let count = found.last().map_or(0, |f| f.0 as usize + 1);
    let mut frames = vec![PoseFrame::default(); count];
    for (frame, path) in found {
        let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        frames[frame as usize] = parse_keypoint_json(&text)?;
    }
    Ok(frames)
}

/// Per-chunk pose features for a frame sequence; a partial last chunk is dropped.
pub fn pose_chunk_features(frames: &[PoseFrame], chunk_size: usize) -> Vec<Vector> {
    frames
        .chunks_exact(chunk_size.max(1))
        .map(pose_chunk_feature)
        .collect()
}
