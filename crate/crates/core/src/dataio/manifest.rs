use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    chunk_labels, read_features, ClassMap, DataError, FeatureMatrix, GroundTruth, Interval,
};
use crate::model::{ChunkInput, Stream};
use crate::training::LabeledVideo;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamFile {
    pub path: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestVideo {
    pub id: String,
    pub fps: f64,
    pub chunk_size: usize,
    pub split: Split,
    pub streams: BTreeMap<Stream, StreamFile>,
}

/// Dataset index. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub classmap: String,
    pub annotations: String,
    pub videos: Vec<ManifestVideo>,
}

/// One loaded video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoData {
    pub id: String,
    pub fps: f64,
    pub chunk_size: usize,
    pub split: Split,
    pub chunks: Vec<ChunkInput>,
    pub intervals: Vec<Interval>,
}

impl VideoData {
    pub fn labels(&self) -> Result<Vec<usize>, DataError> {
        chunk_labels(
            &self.intervals,
            self.fps,
            self.chunk_size,
            self.chunks.len(),
        )
    }

    pub fn to_labeled(&self) -> Result<LabeledVideo, DataError> {
        Ok(LabeledVideo {
            id: self.id.clone(),
            chunks: self.chunks.clone(),
            labels: self.labels()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classmap: ClassMap,
    pub ground_truth: GroundTruth,
    pub videos: Vec<VideoData>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &VideoData> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    pub fn labeled(&self, split: Split) -> Result<Vec<LabeledVideo>, DataError> {
        self.split(split).map(VideoData::to_labeled).collect()
    }
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = super::read_text(path)?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| DataError::Manifest(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(DataError::Manifest(format!(
                "unsupported manifest version {}",
                m.version
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for v in &m.videos {
            if !seen.insert(&v.id) {
                return Err(DataError::Manifest(format!("duplicate video id {}", v.id)));
            }
            if v.chunk_size == 0 || !(v.fps > 0.0) {
                return Err(DataError::Manifest(format!(
                    "video {}: invalid fps/chunk_size",
                    v.id
                )));
            }
            if v.streams.is_empty() {
                return Err(DataError::Manifest(format!(
                    "video {} lists no streams",
                    v.id
                )));
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| DataError::Manifest(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
    }

    /// Dimension of `stream` shared by every video, if all agree.
    pub fn stream_dim(&self, stream: Stream) -> Result<Option<usize>, DataError> {
        let mut dim = None;
        for v in &self.videos {
            match (dim, v.streams.get(&stream)) {
                (_, None) => return Ok(None),
                (None, Some(f)) => dim = Some(f.dim),
                (Some(d), Some(f)) if d != f.dim => {
                    return Err(DataError::Manifest(format!(
                        "{stream} dimension differs across videos ({d} vs {})",
                        f.dim
                    )))
                }
                _ => {}
            }
        }
        Ok(dim)
    }

    /// `(chunk_size, fps)` shared by every video.
    pub fn timing(&self) -> Result<(usize, f64), DataError> {
        let first = self
            .videos
            .first()
            .ok_or_else(|| DataError::Manifest("manifest lists no videos".into()))?;
        for v in &self.videos {
            if v.chunk_size != first.chunk_size || v.fps != first.fps {
                return Err(DataError::Manifest(format!(
                    "video {} has chunk_size/fps {}/{}, expected {}/{}",
                    v.id, v.chunk_size, v.fps, first.chunk_size, first.fps
                )));
            }
        }
        Ok((first.chunk_size, first.fps))
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads the per-stream files of one video, checks declared dimensions and
/// reconciles chunk counts: a one-chunk difference is truncated to the
/// shortest stream with a warning, anything larger is an error.
pub fn load_video_streams(
    base: &Path,
    video: &ManifestVideo,
    streams: &[Stream],
) -> Result<Vec<ChunkInput>, DataError> {
    let mut mats: Vec<(Stream, FeatureMatrix)> = Vec::with_capacity(streams.len());
    for &s in streams {
        let file = video
            .streams
            .get(&s)
            .ok_or_else(|| DataError::Manifest(format!("video {} has no {s} stream", video.id)))?;
        let m = read_features(&resolve(base, &file.path))?;
        if m.dim() != file.dim {
            return Err(DataError::Manifest(format!(
                "video {} {s}: file dimension {} but manifest declares {}",
                video.id,
                m.dim(),
                file.dim
            )));
        }
        mats.push((s, m));
    }
    let min = mats.iter().map(|m| m.1.chunks()).min().unwrap_or(0);
    let max = mats.iter().map(|m| m.1.chunks()).max().unwrap_or(0);
    if max - min > 1 {
        return Err(DataError::Manifest(format!(
            "video {}: stream chunk counts differ by {} (> 1)",
            video.id,
            max - min
        )));
    }
    if max != min {
        log::warn!("video {}: truncating streams to {min} chunks", video.id);
    }
    let mut chunks = vec![ChunkInput::default(); min];
    for (s, m) in &mats {
        for (t, c) in chunks.iter_mut().enumerate() {
            c.set(*s, m.row_f64(t));
        }
    }
    Ok(chunks)
}

/// Loads every video of a manifest with the requested streams.
pub fn load_dataset(manifest_path: &Path, streams: &[Stream]) -> Result<Dataset, DataError> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let classmap = ClassMap::read(&resolve(base, &manifest.classmap))?;
    let ground_truth = GroundTruth::read(&resolve(base, &manifest.annotations), &classmap)?;
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for v in &manifest.videos {
        let chunks = load_video_streams(base, v, streams)?;
        videos.push(VideoData {
            id: v.id.clone(),
            fps: v.fps,
            chunk_size: v.chunk_size,
            split: v.split,
            chunks,
            intervals: ground_truth.intervals(&v.id).to_vec(),
        });
    }
    Ok(Dataset {
        classmap,
        ground_truth,
        videos,
    })
}

pub fn manifest_base(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{encode_features, FeatureMatrix};

    fn write_stream(dir: &Path, name: &str, chunks: usize, dim: usize) {
        let m = FeatureMatrix::new(chunks, dim, vec![1.5; chunks * dim]).unwrap();
        std::fs::write(dir.join(name), encode_features(&m)).unwrap();
    }

    fn manifest(dir: &Path, app: (usize, usize), mot: (usize, usize)) -> PathBuf {
        write_stream(dir, "a.trnf", app.0, app.1);
        write_stream(dir, "m.trnf", mot.0, mot.1);
        std::fs::write(dir.join("classes.tsv"), ClassMap::generic(2).to_text()).unwrap();
        std::fs::write(dir.join("gt.tsv"), "v1\tAction01\t0\t0.4\n").unwrap();
        let mut streams = BTreeMap::new();
        streams.insert(
            Stream::Appearance,
            StreamFile {
                path: "a.trnf".into(),
                dim: 3,
            },
        );
        streams.insert(
            Stream::Motion,
            StreamFile {
                path: "m.trnf".into(),
                dim: 2,
            },
        );
        let m = Manifest {
            version: 1,
            classmap: "classes.tsv".into(),
            annotations: "gt.tsv".into(),
            videos: vec![ManifestVideo {
                id: "v1".into(),
                fps: 30.0,
                chunk_size: 6,
                split: Split::Train,
                streams,
            }],
        };
        let path = dir.join("manifest.json");
        m.write(&path).unwrap();
        path
    }

    #[test]
    fn loads_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = manifest(dir.path(), (4, 3), (4, 2));
        let ds = load_dataset(&path, &[Stream::Appearance, Stream::Motion]).unwrap();
        assert_eq!(ds.videos.len(), 1);
        let v = &ds.videos[0];
        assert_eq!(v.chunks.len(), 4);
        assert_eq!(v.chunks[0].get(Stream::Motion).unwrap(), &[1.5, 1.5]);
        assert_eq!(v.labels().unwrap(), vec![1, 1, 0, 0]);
        assert_eq!(ds.labeled(Split::Train).unwrap().len(), 1);
        assert_eq!(ds.labeled(Split::Test).unwrap().len(), 0);
    }

    #[test]
    fn off_by_one_truncates_larger_gap_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = manifest(dir.path(), (5, 3), (4, 2));
        let ds = load_dataset(&path, &[Stream::Appearance, Stream::Motion]).unwrap();
        assert_eq!(ds.videos[0].chunks.len(), 4);
        let path = manifest(dir.path(), (6, 3), (4, 2));
        assert!(matches!(
            load_dataset(&path, &[Stream::Appearance, Stream::Motion]),
            Err(DataError::Manifest(_))
        ));
    }

    #[test]
    fn declared_dimension_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let path = manifest(dir.path(), (4, 5), (4, 2));
        assert!(matches!(
            load_dataset(&path, &[Stream::Appearance]),
            Err(DataError::Manifest(_))
        ));
        assert!(matches!(
            load_dataset(&path, &[Stream::Pose]),
            Err(DataError::Manifest(_))
        ));
    }
}
