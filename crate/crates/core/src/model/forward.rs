use super::{ChunkInput, DetectionOutput, ModelError, Stream, TrnConfig, TrnParams, TrnState};
use crate::numeric::{
    all_finite, check_len, lstm_forward, relu_in_place, softmax, LstmCache, NumericError, Vector,
};

/// Raw outputs of the temporal decoder, one entry per step.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderRollout {
    pub hiddens: Vec<Vector>,
    pub logits: Vec<Vector>,
    pub features: Vec<Vector>,
}

#[derive(Clone, Debug)]
pub(crate) struct DecoderStepTape {
    pub lstm: LstmCache,
    pub probs: Vector,
    pub feature: Vector,
}

/// Forward intermediates of one chunk, kept for backpropagation.
#[derive(Clone, Debug)]
pub(crate) struct ChunkTape {
    /// Concatenated streams entering the fusion layer.
    pub fusion_input: Option<Vector>,
    /// Input of the embedding layer (fusion output, or the raw stream).
    pub fused: Vector,
    pub embed: Vector,
    pub decoder: Vec<DecoderStepTape>,
    pub encoder: LstmCache,
    pub present: Vector,
}

impl ChunkTape {
    pub fn output(&self) -> DetectionOutput {
        DetectionOutput {
            present: self.present.clone(),
            anticipated: self.decoder.iter().map(|s| s.probs.clone()).collect(),
            predicted_features: self.decoder.iter().map(|s| s.feature.clone()).collect(),
        }
    }

    pub fn next_state(&self) -> TrnState {
        TrnState {
            h: self.encoder.h.clone(),
            c: self.encoder.c.clone(),
        }
    }
}

/// Validates the chunk's streams against the configuration and concatenates
/// the required ones in fusion order.
fn gather(config: &TrnConfig, input: &ChunkInput) -> Result<Vector, ModelError> {
    let required = config.required_streams();
    for s in Stream::ALL {
        let provided = input.get(s);
        match (required.contains(&s), provided) {
            (true, None) => return Err(ModelError::MissingStream(s)),
            (false, Some(_)) => return Err(ModelError::UnexpectedStream(s)),
            (true, Some(v)) => {
                let expected = config.streams.get(s).unwrap_or(0);
                if v.len() != expected {
                    return Err(ModelError::StreamDim {
                        stream: s,
                        expected,
                        found: v.len(),
                    });
                }
                if !all_finite(v) {
                    return Err(NumericError::NonFinite(format!("{s} stream")).into());
                }
            }
            (false, None) => {}
        }
    }
    let mut out = Vec::with_capacity(required.iter().filter_map(|s| config.streams.get(*s)).sum());
    for s in required {
        out.extend_from_slice(input.get(s).unwrap_or(&[]));
    }
    Ok(out)
}

/// Combines one chunk's streams into the embedding-layer input.
///
/// `ONE_STREAM` passes its stream through unchanged; the two-stream variants
/// return `ReLU(W_f·concat + b_f)`.
pub fn fuse(
    params: &TrnParams,
    config: &TrnConfig,
    input: &ChunkInput,
) -> Result<Vector, ModelError> {
    let concat = gather(config, input)?;
    match &params.fusion {
        None => Ok(concat),
        Some(layer) => {
            let mut y = layer.forward(&concat)?;
            relu_in_place(&mut y);
            Ok(y)
        }
    }
}

fn rollout_tape(
    params: &TrnParams,
    init: &TrnState,
    x_embed: &[f64],
    steps: usize,
) -> Vec<DecoderStepTape> {
    let mut tapes: Vec<DecoderStepTape> = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (x, h, c) = match tapes.last() {
            None => (x_embed, &init.h[..], &init.c[..]),
            Some(prev) => (&prev.feature[..], &prev.lstm.h[..], &prev.lstm.c[..]),
        };
        let lstm =
            lstm_forward(&params.decoder, x, h, c).expect("decoder dimensions checked by caller");
        let logits = params.decoder_classifier.forward_unchecked(&lstm.h);
        let probs = softmax(&logits).expect("classes >= 1");
        let feature = params.feature_predictor.forward_unchecked(&lstm.h);
        tapes.push(DecoderStepTape {
            lstm,
            probs,
            feature,
        });
    }
    tapes
}

/// Autoregressive decoder rollout: step 1 consumes `x_embed`, each later step
/// consumes the feature predicted by the step before it.
pub fn decoder_rollout(
    params: &TrnParams,
    init: &TrnState,
    x_embed: &[f64],
    steps: usize,
) -> Result<DecoderRollout, ModelError> {
    let h = params.decoder.hidden_size();
    check_len("decoder_rollout", "decoder hidden state", h, init.h.len())?;
    check_len("decoder_rollout", "decoder cell state", h, init.c.len())?;
    check_len(
        "decoder_rollout",
        "embedded input",
        params.decoder.input_size(),
        x_embed.len(),
    )?;
    if steps == 0 {
        return Err(ModelError::Config(
            "decoder rollout needs at least one step".into(),
        ));
    }
    let tapes = rollout_tape(params, init, x_embed, steps);
    Ok(DecoderRollout {
        logits: tapes
            .iter()
            .map(|t| params.decoder_classifier.forward_unchecked(&t.lstm.h))
            .collect(),
        features: tapes.iter().map(|t| t.feature.clone()).collect(),
        hiddens: tapes.into_iter().map(|t| t.lstm.h).collect(),
    })
}

/// Elementwise mean of the decoder hidden states.
pub fn future_gate(hiddens: &[Vector]) -> Result<Vector, ModelError> {
    let first = hiddens.first().ok_or(NumericError::Empty("future_gate"))?;
    let mut out = vec![0.0; first.len()];
    for h in hiddens {
        check_len("future_gate", "hidden state", first.len(), h.len())?;
        for (o, v) in out.iter_mut().zip(h) {
            *o += v;
        }
    }
    let n = hiddens.len() as f64;
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}

fn encoder_cache(
    params: &TrnParams,
    embed: &[f64],
    future: &[f64],
    state: &TrnState,
) -> Result<LstmCache, ModelError> {
    let h = params.encoder.hidden_size();
    check_len("encoder_step", "embedded input", h, embed.len())?;
    check_len("encoder_step", "future context", h, future.len())?;
    let mut x = Vec::with_capacity(2 * h);
    x.extend_from_slice(embed);
    x.extend_from_slice(future);
    Ok(lstm_forward(&params.encoder, &x, &state.h, &state.c)?)
}

/// One encoder step on `[embed, future]`, returning the new state and the
/// present-class logits.
pub fn encoder_step(
    params: &TrnParams,
    embed: &[f64],
    future: &[f64],
    state: &TrnState,
) -> Result<(TrnState, Vector), ModelError> {
    let cache = encoder_cache(params, embed, future, state)?;
    let logits = params.encoder_classifier.forward_unchecked(&cache.h);
    Ok((
        TrnState {
            h: cache.h,
            c: cache.c,
        },
        logits,
    ))
}

/// Full forward pass for one chunk. Both the batch and the streaming paths go
/// through here, which is what makes them bitwise identical.
pub(crate) fn chunk_forward(
    params: &TrnParams,
    config: &TrnConfig,
    input: &ChunkInput,
    state: &TrnState,
) -> Result<ChunkTape, ModelError> {
    let hidden = config.hidden_size;
    check_len("trn_forward", "encoder hidden state", hidden, state.h.len())?;
    check_len("trn_forward", "encoder cell state", hidden, state.c.len())?;

    let concat = gather(config, input)?;
    let (fusion_input, fused) = match &params.fusion {
        None => (None, concat),
        Some(layer) => {
            let mut y = layer.forward(&concat)?;
            relu_in_place(&mut y);
            (Some(concat), y)
        }
    };
    let mut embed = params.embed.forward(&fused)?;
    relu_in_place(&mut embed);

    let decoder = rollout_tape(params, state, &embed, config.decoder_steps);
    let hiddens: Vec<Vector> = decoder.iter().map(|t| t.lstm.h.clone()).collect();
    let future = future_gate(&hiddens)?;
    let encoder = encoder_cache(params, &embed, &future, state)?;
    let logits = params.encoder_classifier.forward_unchecked(&encoder.h);
    let present = softmax(&logits)?;

    Ok(ChunkTape {
        fusion_input,
        fused,
        embed,
        decoder,
        encoder,
        present,
    })
}

pub(crate) fn forward_tapes(
    params: &TrnParams,
    config: &TrnConfig,
    sequence: &[ChunkInput],
    state0: &TrnState,
) -> Result<Vec<ChunkTape>, ModelError> {
    let mut tapes: Vec<ChunkTape> = Vec::with_capacity(sequence.len());
    let mut state = state0.clone();
    for input in sequence {
        let tape = chunk_forward(params, config, input, &state)?;
        state = tape.next_state();
        tapes.push(tape);
    }
    Ok(tapes)
}

/// Runs the cell over a whole sequence, returning per-chunk outputs in order
/// and the final encoder state for continuation.
pub fn trn_forward(
    params: &TrnParams,
    config: &TrnConfig,
    sequence: &[ChunkInput],
    state0: &TrnState,
) -> Result<(Vec<DetectionOutput>, TrnState), ModelError> {
    let mut outputs = Vec::with_capacity(sequence.len());
    let mut state = state0.clone();
    for input in sequence {
        let tape = chunk_forward(params, config, input, &state)?;
        state = tape.next_state();
        outputs.push(tape.output());
    }
    Ok((outputs, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FusionVariant, StreamDims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(fusion: FusionVariant, h: usize, classes: usize) -> TrnConfig {
        let mut c = TrnConfig::new(
            fusion,
            StreamDims {
                appearance: Some(5),
                motion: (fusion != FusionVariant::OneStream).then_some(3),
                pose: (fusion == FusionVariant::FusedTwoStream).then_some(4),
            },
        );
        c.hidden_size = h;
        c.num_actions = classes - 1;
        c.decoder_steps = 3;
        c
    }

    fn random_chunk(config: &TrnConfig, rng: &mut impl Rng) -> ChunkInput {
        let mut c = ChunkInput::default();
        for s in config.streams.active() {
            let d = config.streams.get(s).unwrap();
            c.set(s, (0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        c
    }

    #[test]
    fn one_stream_is_pass_through() {
        let mut c = TrnConfig::new(
            FusionVariant::OneStream,
            StreamDims {
                appearance: Some(4096),
                ..Default::default()
            },
        );
        c.hidden_size = 2;
        let p = TrnParams::zeros(&c);
        let v: Vec<f64> = (0..4096).map(|i| i as f64 * 0.001).collect();
        let out = fuse(
            &p,
            &c,
            &ChunkInput::default().with(Stream::Appearance, v.clone()),
        )
        .unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn two_stream_zero_weights_give_zero_vector() {
        let c = tiny(FusionVariant::TwoStream, 6, 3);
        let p = TrnParams::zeros(&c);
        let input = ChunkInput::default()
            .with(Stream::Appearance, vec![1.0; 5])
            .with(Stream::Motion, vec![-2.0; 3]);
        assert_eq!(fuse(&p, &c, &input).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn fuse_stream_errors() {
        let c = tiny(FusionVariant::FusedTwoStream, 4, 3);
        let p = TrnParams::zeros(&c);
        let partial = ChunkInput::default()
            .with(Stream::Appearance, vec![0.0; 5])
            .with(Stream::Motion, vec![0.0; 3]);
        assert_eq!(
            fuse(&p, &c, &partial),
            Err(ModelError::MissingStream(Stream::Pose))
        );
        let wrong = partial.clone().with(Stream::Pose, vec![0.0; 7]);
        assert!(matches!(
            fuse(&p, &c, &wrong),
            Err(ModelError::StreamDim {
                stream: Stream::Pose,
                expected: 4,
                found: 7
            })
        ));
        let c2 = tiny(FusionVariant::TwoStream, 4, 3);
        let extra = partial.with(Stream::Pose, vec![0.0; 4]);
        assert_eq!(
            fuse(&TrnParams::zeros(&c2), &c2, &extra),
            Err(ModelError::UnexpectedStream(Stream::Pose))
        );
    }

    #[test]
    fn fused_concat_order_is_appearance_pose_motion() {
        let c = tiny(FusionVariant::FusedTwoStream, 4, 3);
        let input = ChunkInput::default()
            .with(Stream::Appearance, vec![1.0; 5])
            .with(Stream::Motion, vec![3.0; 3])
            .with(Stream::Pose, vec![2.0; 4]);
        let g = gather(&c, &input).unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!(&g[..5], &[1.0; 5]);
        assert_eq!(&g[5..9], &[2.0; 4]);
        assert_eq!(&g[9..], &[3.0; 3]);
    }

    #[test]
    fn rollout_boundaries_and_zero_params() {
        let c = tiny(FusionVariant::TwoStream, 4, 3);
        let p = TrnParams::zeros(&c);
        let init = TrnState::zeros(4);
        let r = decoder_rollout(&p, &init, &[0.3; 4], 1).unwrap();
        assert_eq!(
            (r.hiddens.len(), r.logits.len(), r.features.len()),
            (1, 1, 1)
        );
        let r = decoder_rollout(&p, &init, &[0.3; 4], 5).unwrap();
        for k in 0..5 {
            assert_eq!(r.features[k], vec![0.0; 4]);
            assert_eq!(r.logits[k], vec![0.0; 3]);
            for v in softmax(&r.logits[k]).unwrap() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert!(decoder_rollout(&p, &init, &[0.3; 4], 0).is_err());
        assert!(decoder_rollout(&p, &TrnState::zeros(3), &[0.3; 4], 2).is_err());
    }

    #[test]
    fn rollout_is_self_consistent() {
        let c = tiny(FusionVariant::TwoStream, 5, 4);
        let p = TrnParams::init(&c, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = TrnState {
            h: (0..5).map(|_| rng.random_range(-0.5..0.5)).collect(),
            c: (0..5).map(|_| rng.random_range(-0.5..0.5)).collect(),
        };
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let full = decoder_rollout(&p, &init, &x, 3).unwrap();
        // Re-run step 2 from step 1's state with step 1's feature as fresh input.
        let tapes = rollout_tape(&p, &init, &x, 1);
        let mid = TrnState {
            h: tapes[0].lstm.h.clone(),
            c: tapes[0].lstm.c.clone(),
        };
        let again = decoder_rollout(&p, &mid, &full.features[0], 1).unwrap();
        assert_eq!(again.hiddens[0], full.hiddens[1]);
        assert_eq!(again.logits[0], full.logits[1]);
        assert_eq!(again.features[0], full.features[1]);
    }

    #[test]
    fn future_gate_examples() {
        let v = vec![0.5, -1.0, 2.0];
        assert_eq!(future_gate(&[v.clone(), v.clone(), v.clone()]).unwrap(), v);
        assert_eq!(
            future_gate(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap(),
            vec![1.0, 1.0]
        );
        assert!(future_gate(&[]).is_err());
        assert!(future_gate(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn encoder_zero_params_and_statefulness() {
        let c = tiny(FusionVariant::TwoStream, 4, 3);
        let z = TrnParams::zeros(&c);
        let (s, logits) = encoder_step(&z, &[1.0; 4], &[0.5; 4], &TrnState::zeros(4)).unwrap();
        assert_eq!(s, TrnState::zeros(4));
        assert_eq!(softmax(&logits).unwrap(), vec![1.0 / 3.0; 3]);

        let p = TrnParams::init(&c, 4).unwrap();
        let (s1, l1) = encoder_step(&p, &[0.2; 4], &[0.1; 4], &TrnState::zeros(4)).unwrap();
        let (_, l2) = encoder_step(&p, &[0.2; 4], &[0.1; 4], &s1).unwrap();
        assert_ne!(l1, l2);
    }

    #[test]
    fn encoder_matches_scalar_reference() {
        let mut c = tiny(FusionVariant::TwoStream, 2, 2);
        c.num_actions = 1;
        let p = TrnParams::init(&c, 21).unwrap();
        let embed = [0.3, 0.9];
        let future = [-0.4, 0.2];
        let state = TrnState {
            h: vec![0.1, -0.2],
            c: vec![0.5, 0.05],
        };
        let (s, logits) = encoder_step(&p, &embed, &future, &state).unwrap();

        let x = [embed[0], embed[1], future[0], future[1]];
        let e = &p.encoder;
        let pre = |r: usize| {
            let mut acc = e.bias[r];
            for k in 0..4 {
                acc += e.w_input.get(r, k) * x[k];
            }
            for k in 0..2 {
                acc += e.w_hidden.get(r, k) * state.h[k];
            }
            acc
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = [0.0; 2];
        let mut cc = [0.0; 2];
        for j in 0..2 {
            cc[j] = sig(pre(2 + j)) * state.c[j] + sig(pre(j)) * pre(4 + j).tanh();
            h[j] = sig(pre(6 + j)) * cc[j].tanh();
        }
        for j in 0..2 {
            assert!((s.h[j] - h[j]).abs() < 1e-12);
            assert!((s.c[j] - cc[j]).abs() < 1e-12);
        }
        let w = &p.encoder_classifier;
        for r in 0..2 {
            let want = w.bias[r] + w.weight.get(r, 0) * h[0] + w.weight.get(r, 1) * h[1];
            assert!((logits[r] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_shapes_and_determinism() {
        for fusion in [
            FusionVariant::OneStream,
            FusionVariant::TwoStream,
            FusionVariant::FusedTwoStream,
        ] {
            let c = tiny(fusion, 4, 3);
            let p = TrnParams::init(&c, 2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let seq: Vec<ChunkInput> = (0..6).map(|_| random_chunk(&c, &mut rng)).collect();
            let (out, last) = trn_forward(&p, &c, &seq, &TrnState::zeros(4)).unwrap();
            assert_eq!(out.len(), 6);
            for o in &out {
                assert_eq!(o.anticipated.len(), 3);
                assert_eq!(o.predicted_features.len(), 3);
                for d in std::iter::once(&o.present).chain(&o.anticipated) {
                    assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    assert!(d.iter().all(|v| *v >= 0.0));
                }
            }
            let (out2, last2) = trn_forward(&p, &c, &seq, &TrnState::zeros(4)).unwrap();
            assert_eq!(out, out2);
            assert_eq!(last, last2);

            // T = 1 boundary equals the first chunk of the longer run.
            let (one, _) = trn_forward(&p, &c, &seq[..1], &TrnState::zeros(4)).unwrap();
            assert_eq!(one[0], out[0]);
        }
    }

    #[test]
    fn split_sequence_equals_whole() {
        let c = tiny(FusionVariant::TwoStream, 4, 3);
        let p = TrnParams::init(&c, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let seq: Vec<ChunkInput> = (0..8).map(|_| random_chunk(&c, &mut rng)).collect();
        let (whole, final_whole) = trn_forward(&p, &c, &seq, &TrnState::zeros(4)).unwrap();
        let mut state = TrnState::zeros(4);
        let mut pieces = Vec::new();
        for chunk in &seq {
            let (mut o, s) = trn_forward(&p, &c, std::slice::from_ref(chunk), &state).unwrap();
            pieces.append(&mut o);
            state = s;
        }
        assert_eq!(whole, pieces);
        assert_eq!(final_whole, state);
    }
}
