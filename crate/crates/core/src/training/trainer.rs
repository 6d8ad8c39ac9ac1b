use std::ops::ControlFlow;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, sequence_loss_and_gradient, AdamState, TrainConfig, TrainError};
use crate::eval::map_over_samples;
use crate::model::{trn_forward, ChunkInput, TrnConfig, TrnParams, TrnState};

/// One video's chunk inputs with per-chunk class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVideo {
    pub id: String,
    pub chunks: Vec<ChunkInput>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldOutMetrics {
    /// Present-class mAP, `None` when no action class has a positive.
    pub encoder_map: Option<f64>,
    /// Anticipation mAP per decoder step (index 0 is step 1).
    pub anticipation_map: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_encoder_loss: f64,
    pub train_decoder_loss: f64,
    pub held_out: Option<HeldOutMetrics>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: TrnParams,
    pub adam: AdamState,
    pub metrics: Vec<EpochMetrics>,
}

/// Non-overlapping windows of at most `seq_len` chunks; the shorter tail is kept.
pub fn split_windows(len: usize, seq_len: usize) -> Vec<(usize, usize)> {
    (0..len)
        .step_by(seq_len.max(1))
        .map(|s| (s, (s + seq_len).min(len)))
        .collect()
}

/// Runs each video from zero state and scores present and anticipated
/// outputs against its labels.
pub fn evaluate(
    params: &TrnParams,
    config: &TrnConfig,
    videos: &[LabeledVideo],
) -> Result<HeldOutMetrics, TrainError> {
    let classes = config.classes();
    let mut runs = Vec::with_capacity(videos.len());
    for v in videos {
        let (outputs, _) = trn_forward(
            params,
            config,
            &v.chunks,
            &TrnState::zeros(config.hidden_size),
        )?;
        runs.push(outputs);
    }
    let encoder_map = map_over_samples(
        videos
            .iter()
            .zip(&runs)
            .flat_map(|(v, out)| out.iter().zip(&v.labels).map(|(o, &l)| (&o.present[..], l))),
        classes,
    )
    .ok()
    .map(|r| r.map);
    let anticipation_map = (1..=config.decoder_steps)
        .map(|step| {
            map_over_samples(
                videos.iter().zip(&runs).flat_map(|(v, out)| {
                    out.iter()
                        .enumerate()
                        .filter(move |(t, _)| t + step < v.labels.len())
                        .map(move |(t, o)| (&o.anticipated[step - 1][..], v.labels[t + step]))
                }),
                classes,
            )
            .ok()
            .map(|r| r.map)
        })
        .collect();
    Ok(HeldOutMetrics {
        encoder_map,
        anticipation_map,
    })
}

pub fn train(
    train_set: &[LabeledVideo],
    held_out: &[LabeledVideo],
    model: &TrnConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with(train_set, held_out, model, config, |_| {
        ControlFlow::Continue(())
    })
}

/// Seeded training loop. `on_epoch` sees each epoch's metrics and may stop
/// training early by returning `ControlFlow::Break`.
pub fn train_with<F>(
    train_set: &[LabeledVideo],
    held_out: &[LabeledVideo],
    model: &TrnConfig,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&EpochMetrics) -> ControlFlow<()>,
{
    config.validate()?;
    model.validate()?;
    if config.decoder_steps != model.decoder_steps {
        return Err(TrainError::Config(format!(
            "training decoder_steps {} differs from model decoder_steps {}",
            config.decoder_steps, model.decoder_steps
        )));
    }
    let mut windows = Vec::new();
    for (vi, v) in train_set.iter().enumerate() {
        if v.labels.len() != v.chunks.len() {
            return Err(TrainError::LabelCount {
                labels: v.labels.len(),
                chunks: v.chunks.len(),
            });
        }
        windows.extend(
            split_windows(v.chunks.len(), config.seq_len)
                .into_iter()
                .map(|(s, e)| (vi, s, e)),
        );
    }
    if windows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let mut params = TrnParams::init(model, config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F_5A_u64);
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        windows.shuffle(&mut shuffle_rng);
        let (mut total, mut enc, mut dec) = (0.0, 0.0, 0.0);
        for batch in windows.chunks(config.batch_size) {
            let mut grads = params.zeros_like();
            for &(vi, s, e) in batch {
                let v = &train_set[vi];
                let (loss, g) = sequence_loss_and_gradient(
                    &params,
                    model,
                    &v.chunks[s..e],
                    &v.labels[s..e],
                    config.loss_weights,
                )?;
                grads.add_assign(&g);
                total += loss.total;
                enc += loss.encoder;
                dec += loss.decoder;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &grads, &mut adam, config)?;
        }
        let n = windows.len() as f64;
        let held = if held_out.is_empty() {
            None
        } else {
            Some(evaluate(&params, model, held_out)?)
        };
        let m = EpochMetrics {
            epoch,
            train_loss: total / n,
            train_encoder_loss: enc / n,
            train_decoder_loss: dec / n,
            held_out: held,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} (enc {:.5}, dec {:.5}), held-out encoder mAP {} in {:.1}s",
            m.train_loss,
            m.train_encoder_loss,
            m.train_decoder_loss,
            m.held_out
                .as_ref()
                .and_then(|h| h.encoder_map)
                .map_or("n/a".to_string(), |v| format!("{v:.4}")),
            started.elapsed().as_secs_f64()
        );
        let flow = on_epoch(&m);
        metrics.push(m);
        if flow.is_break() {
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        adam,
        metrics,
    })
}
