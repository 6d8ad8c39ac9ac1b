//! Shared fixtures for the benchmarks in `benches/` and the timing tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trn_core::model::{FusionVariant, Stream, StreamDims, POSE_FEATURE_DIM};
use trn_core::training::LabeledVideo;
use trn_core::{ChunkInput, TrnConfig, TrnParams};

/// A two-stream model shaped like the synthetic benchmark task.
pub fn model(fusion: FusionVariant, hidden: usize) -> TrnConfig {
    let streams = StreamDims {
        appearance: Some(16),
        motion: (fusion != FusionVariant::OneStream).then_some(16),
        pose: (fusion == FusionVariant::FusedTwoStream).then_some(POSE_FEATURE_DIM),
    };
    let mut c = TrnConfig::new(fusion, streams);
    c.hidden_size = hidden;
    c.num_actions = 3;
    c
}

pub fn params(config: &TrnConfig) -> TrnParams {
    TrnParams::init(config, 0).expect("valid benchmark config")
}

pub fn chunks(config: &TrnConfig, len: usize, seed: u64) -> Vec<ChunkInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let mut c = ChunkInput::default();
            for s in Stream::ALL {
                if let Some(d) = config.streams.get(s) {
                    c.set(s, (0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
                }
            }
            c
        })
        .collect()
}

pub fn labeled(config: &TrnConfig, len: usize, seed: u64) -> LabeledVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    LabeledVideo {
        id: format!("bench{seed}"),
        chunks: chunks(config, len, seed),
        labels: (0..len)
            .map(|_| rng.random_range(0..config.classes()))
            .collect(),
    }
}

/// Random scores and labels for `n` samples over `classes` classes.
pub fn scored_samples(n: usize, classes: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s = (0..classes).map(|_| rng.random::<f64>()).collect();
            (s, rng.random_range(0..classes))
        })
        .collect()
}
