use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::{
    forward_tapes, ChunkInput, ChunkTape, DetectionOutput, Gradients, TrnConfig, TrnParams,
    TrnState,
};
use crate::numeric::{
    cross_entropy, lstm_backward, relu_backward_in_place, softmax_cross_entropy_grad,
};

/// Relative weight of the present-class and anticipation terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub encoder: f64,
    pub decoder: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            encoder: 1.0,
            decoder: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean encoder cross-entropy over chunks.
    pub encoder: f64,
    /// Mean decoder cross-entropy over unmasked (chunk, step) pairs.
    pub decoder: f64,
    pub decoder_pairs: usize,
}

/// Number of (chunk, step) pairs whose target chunk `t + i` lies inside a
/// sequence of length `len`.
pub fn decoder_pair_count(len: usize, steps: usize) -> usize {
    (0..len).map(|t| steps.min(len - 1 - t)).sum()
}

fn check_labels(labels: &[usize], len: usize, classes: usize) -> Result<(), TrainError> {
    if labels.len() != len {
        return Err(TrainError::LabelCount {
            labels: labels.len(),
            chunks: len,
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(TrainError::LabelOutOfRange {
            label: bad,
            classes,
        });
    }
    Ok(())
}

/// Loss of already-computed outputs. Decoder step `i` at chunk `t` targets
/// `labels[t + i]`; targets past the end are masked out.
pub fn loss_from_outputs(
    outputs: &[DetectionOutput],
    labels: &[usize],
    weights: LossWeights,
) -> Result<LossBreakdown, TrainError> {
    let classes = outputs.first().map_or(usize::MAX, |o| o.present.len());
    check_labels(labels, outputs.len(), classes)?;
    if outputs.is_empty() {
        return Err(TrainError::EmptySequence);
    }
    let mut enc = 0.0;
    let mut dec = 0.0;
    let mut pairs = 0usize;
    for (t, out) in outputs.iter().enumerate() {
        enc += cross_entropy(&out.present, labels[t])?;
        for (k, probs) in out.anticipated.iter().enumerate() {
            let target = t + k + 1;
            if target < outputs.len() {
                dec += cross_entropy(probs, labels[target])?;
                pairs += 1;
            }
        }
    }
    let enc = enc / outputs.len() as f64;
    let dec = if pairs > 0 { dec / pairs as f64 } else { 0.0 };
    Ok(LossBreakdown {
        total: weights.encoder * enc + weights.decoder * dec,
        encoder: enc,
        decoder: dec,
        decoder_pairs: pairs,
    })
}

/// Training objective of one labeled sequence, started from zero state.
pub fn sequence_loss(
    params: &TrnParams,
    config: &TrnConfig,
    sequence: &[ChunkInput],
    labels: &[usize],
    weights: LossWeights,
) -> Result<f64, TrainError> {
    check_labels(labels, sequence.len(), config.classes())?;
    let (outputs, _) = crate::model::trn_forward(
        params,
        config,
        sequence,
        &TrnState::zeros(config.hidden_size),
    )?;
    Ok(loss_from_outputs(&outputs, labels, weights)?.total)
}

/// Loss and its exact gradient by backpropagation through time.
pub fn sequence_loss_and_gradient(
    params: &TrnParams,
    config: &TrnConfig,
    sequence: &[ChunkInput],
    labels: &[usize],
    weights: LossWeights,
) -> Result<(LossBreakdown, Gradients), TrainError> {
    check_labels(labels, sequence.len(), config.classes())?;
    let tapes = forward_tapes(
        params,
        config,
        sequence,
        &TrnState::zeros(config.hidden_size),
    )?;
    let outputs: Vec<DetectionOutput> = tapes.iter().map(ChunkTape::output).collect();
    let loss = loss_from_outputs(&outputs, labels, weights)?;
    let grads = backward(params, config, &tapes, labels, weights, loss.decoder_pairs);
    Ok((loss, grads))
}

fn backward(
    params: &TrnParams,
    config: &TrnConfig,
    tapes: &[ChunkTape],
    labels: &[usize],
    weights: LossWeights,
    pairs: usize,
) -> Gradients {
    let h = config.hidden_size;
    let len = tapes.len();
    let steps = config.decoder_steps;
    let enc_scale = weights.encoder / len as f64;
    let dec_scale = if pairs > 0 {
        weights.decoder / pairs as f64
    } else {
        0.0
    };
    let gate_scale = 1.0 / steps as f64;

    let mut grads = params.zeros_like();
    // Gradient w.r.t. the encoder state leaving chunk t, flowing back from t + 1.
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];

    for t in (0..len).rev() {
        let tape = &tapes[t];

        let dlogits = softmax_cross_entropy_grad(&tape.present, labels[t], enc_scale);
        let mut dh = dh_next.clone();
        params.encoder_classifier.backward(
            &tape.encoder.h,
            &dlogits,
            &mut grads.encoder_classifier,
            Some(&mut dh),
        );

        let mut dx_enc = vec![0.0; 2 * h];
        let mut dh_prev = vec![0.0; h];
        let mut dc_prev = vec![0.0; h];
        lstm_backward(
            &params.encoder,
            &tape.encoder,
            &dh,
            &dc_next,
            &mut grads.encoder,
            &mut dx_enc,
            &mut dh_prev,
            &mut dc_prev,
        );
        let mut d_embed = dx_enc[..h].to_vec();
        let d_gate: Vec<f64> = dx_enc[h..].iter().map(|v| v * gate_scale).collect();

        // Decoder, last step first. `d_feat` holds the gradient of the feature
        // predicted at step k, which step k + 1 consumed as input.
        let mut dh_dec = vec![0.0; h];
        let mut dc_dec = vec![0.0; h];
        let mut d_feat = vec![0.0; h];
        for k in (0..steps).rev() {
            let st = &tape.decoder[k];
            let mut dh_k: Vec<f64> = dh_dec.iter().zip(&d_gate).map(|(a, b)| a + b).collect();
            let target = t + k + 1;
            if target < len && dec_scale != 0.0 {
                let dlog = softmax_cross_entropy_grad(&st.probs, labels[target], dec_scale);
                params.decoder_classifier.backward(
                    &st.lstm.h,
                    &dlog,
                    &mut grads.decoder_classifier,
                    Some(&mut dh_k),
                );
            }
            if k + 1 < steps {
                params.feature_predictor.backward(
                    &st.lstm.h,
                    &d_feat,
                    &mut grads.feature_predictor,
                    Some(&mut dh_k),
                );
            }
            let mut dx = vec![0.0; h];
            let mut dh_before = vec![0.0; h];
            let mut dc_before = vec![0.0; h];
            lstm_backward(
                &params.decoder,
                &st.lstm,
                &dh_k,
                &dc_dec,
                &mut grads.decoder,
                &mut dx,
                &mut dh_before,
                &mut dc_before,
            );
            if k == 0 {
                for (a, b) in d_embed.iter_mut().zip(&dx) {
                    *a += b;
                }
            } else {
                d_feat = dx;
            }
            dh_dec = dh_before;
            dc_dec = dc_before;
        }
        // The decoder was seeded from the encoder state entering this chunk.
        for j in 0..h {
            dh_prev[j] += dh_dec[j];
            dc_prev[j] += dc_dec[j];
        }

        relu_backward_in_place(&tape.embed, &mut d_embed);
        match (&params.fusion, &tape.fusion_input, &mut grads.fusion) {
            (Some(fusion), Some(concat), Some(fusion_grads)) => {
                let mut d_fused = vec![0.0; h];
                params
                    .embed
                    .backward(&tape.fused, &d_embed, &mut grads.embed, Some(&mut d_fused));
                relu_backward_in_place(&tape.fused, &mut d_fused);
                fusion.backward(concat, &d_fused, fusion_grads, None);
            }
            _ => params
                .embed
                .backward(&tape.fused, &d_embed, &mut grads.embed, None),
        }

        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    grads
}
