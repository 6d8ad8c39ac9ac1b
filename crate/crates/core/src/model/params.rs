use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, TrnConfig};
use crate::numeric::{Linear, LstmParams};

/// Learnable weights of the cell and its fusion front-end.
///
/// The same struct doubles as the gradient container (see [`Gradients`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrnParams {
    /// Absent for `ONE_STREAM`.
    pub fusion: Option<Linear>,
    pub embed: Linear,
    pub decoder: LstmParams,
    pub decoder_classifier: Linear,
    pub feature_predictor: Linear,
    pub encoder: LstmParams,
    pub encoder_classifier: Linear,
}

/// Gradient buffers, shape-congruent with [`TrnParams`].
pub type Gradients = TrnParams;

/// Borrowed view of one named parameter tensor.
#[derive(Debug)]
pub struct TensorRef<'a> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl TrnParams {
    pub fn zeros(config: &TrnConfig) -> Self {
        let h = config.hidden_size;
        let classes = config.classes();
        Self {
            fusion: config.fusion_input_dim().map(|d| Linear::zeros(h, d)),
            embed: Linear::zeros(h, config.embed_input_dim()),
            decoder: LstmParams::zeros(h, h),
            decoder_classifier: Linear::zeros(classes, h),
            feature_predictor: Linear::zeros(h, h),
            encoder: LstmParams::zeros(2 * h, h),
            encoder_classifier: Linear::zeros(classes, h),
        }
    }

    /// Seeded uniform `±1/√fan_in` initialization with LSTM forget bias +1.
    pub fn init(config: &TrnConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_size;
        let classes = config.classes();
        Ok(Self {
            fusion: config
                .fusion_input_dim()
                .map(|d| Linear::init(h, d, &mut rng)),
            embed: Linear::init(h, config.embed_input_dim(), &mut rng),
            decoder: LstmParams::init(h, h, &mut rng),
            decoder_classifier: Linear::init(classes, h, &mut rng),
            feature_predictor: Linear::init(h, h, &mut rng),
            encoder: LstmParams::init(2 * h, h, &mut rng),
            encoder_classifier: Linear::init(classes, h, &mut rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.1.fill(0.0);
        }
        z
    }

    /// Every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        fn lin<'a>(out: &mut Vec<TensorRef<'a>>, w: &'static str, b: &'static str, l: &'a Linear) {
            out.push(TensorRef {
                name: w,
                rows: l.weight.rows(),
                cols: l.weight.cols(),
                data: l.weight.as_slice(),
            });
            out.push(TensorRef {
                name: b,
                rows: l.bias.len(),
                cols: 1,
                data: &l.bias,
            });
        }
        fn lstm<'a>(out: &mut Vec<TensorRef<'a>>, names: [&'static str; 3], p: &'a LstmParams) {
            out.push(TensorRef {
                name: names[0],
                rows: p.w_input.rows(),
                cols: p.w_input.cols(),
                data: p.w_input.as_slice(),
            });
            out.push(TensorRef {
                name: names[1],
                rows: p.w_hidden.rows(),
                cols: p.w_hidden.cols(),
                data: p.w_hidden.as_slice(),
            });
            out.push(TensorRef {
                name: names[2],
                rows: p.bias.len(),
                cols: 1,
                data: &p.bias,
            });
        }
        let mut out = Vec::with_capacity(19);
        if let Some(f) = &self.fusion {
            lin(&mut out, "fusion.weight", "fusion.bias", f);
        }
        lin(&mut out, "embed.weight", "embed.bias", &self.embed);
        lstm(
            &mut out,
            ["decoder.w_input", "decoder.w_hidden", "decoder.bias"],
            &self.decoder,
        );
        lin(
            &mut out,
            "decoder_classifier.weight",
            "decoder_classifier.bias",
            &self.decoder_classifier,
        );
        lin(
            &mut out,
            "feature_predictor.weight",
            "feature_predictor.bias",
            &self.feature_predictor,
        );
        lstm(
            &mut out,
            ["encoder.w_input", "encoder.w_hidden", "encoder.bias"],
            &self.encoder,
        );
        lin(
            &mut out,
            "encoder_classifier.weight",
            "encoder_classifier.bias",
            &self.encoder_classifier,
        );
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::with_capacity(19);
        if let Some(f) = &mut self.fusion {
            out.push(("fusion.weight", f.weight.as_mut_slice()));
            out.push(("fusion.bias", &mut f.bias));
        }
        out.push(("embed.weight", self.embed.weight.as_mut_slice()));
        out.push(("embed.bias", &mut self.embed.bias));
        out.push(("decoder.w_input", self.decoder.w_input.as_mut_slice()));
        out.push(("decoder.w_hidden", self.decoder.w_hidden.as_mut_slice()));
        out.push(("decoder.bias", &mut self.decoder.bias));
        out.push((
            "decoder_classifier.weight",
            self.decoder_classifier.weight.as_mut_slice(),
        ));
        out.push(("decoder_classifier.bias", &mut self.decoder_classifier.bias));
        out.push((
            "feature_predictor.weight",
            self.feature_predictor.weight.as_mut_slice(),
        ));
        out.push(("feature_predictor.bias", &mut self.feature_predictor.bias));
        out.push(("encoder.w_input", self.encoder.w_input.as_mut_slice()));
        out.push(("encoder.w_hidden", self.encoder.w_hidden.as_mut_slice()));
        out.push(("encoder.bias", &mut self.encoder.bias));
        out.push((
            "encoder_classifier.weight",
            self.encoder_classifier.weight.as_mut_slice(),
        ));
        out.push(("encoder_classifier.bias", &mut self.encoder_classifier.bias));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            v.extend_from_slice(t.data);
        }
        v
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(ModelError::Config(format!(
                "flat parameter vector has {} values, model needs {n}",
                flat.len()
            )));
        }
        let mut off = 0;
        for (_, t) in self.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        let theirs = other.tensors();
        for ((_, mine), t) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(t.data) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            for v in t {
                *v *= factor;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn check_shapes(&self, config: &TrnConfig) -> Result<(), ModelError> {
        let expected = Self::zeros(config);
        let mine = self.tensors();
        let theirs = expected.tensors();
        if mine.len() != theirs.len() {
            return Err(ModelError::Config(format!(
                "parameter set has {} tensors, config implies {}",
                mine.len(),
                theirs.len()
            )));
        }
        for (a, b) in mine.iter().zip(&theirs) {
            if a.name != b.name || a.rows != b.rows || a.cols != b.cols {
                return Err(ModelError::Config(format!(
                    "tensor {} is {}x{}, config implies {} {}x{}",
                    a.name, a.rows, a.cols, b.name, b.rows, b.cols
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FusionVariant, StreamDims};

    fn cfg(fusion: FusionVariant) -> TrnConfig {
        let mut c = TrnConfig::new(
            fusion,
            StreamDims {
                appearance: Some(5),
                motion: (fusion != FusionVariant::OneStream).then_some(3),
                pose: (fusion == FusionVariant::FusedTwoStream).then_some(2),
            },
        );
        c.hidden_size = 4;
        c.num_actions = 2;
        c
    }

    #[test]
    fn parameter_count_is_a_function_of_config() {
        let (h, k) = (4, 3);
        let lstm = |i: usize| 4 * h * i + 4 * h * h + 4 * h;
        let common = lstm(h) + (k * h + k) + (h * h + h) + lstm(2 * h) + (k * h + k);
        let one = TrnParams::init(&cfg(FusionVariant::OneStream), 1).unwrap();
        assert_eq!(one.num_params(), common + h * 5 + h);
        let two = TrnParams::init(&cfg(FusionVariant::TwoStream), 1).unwrap();
        assert_eq!(two.num_params(), common + (h * 8 + h) + (h * h + h));
        let fused = TrnParams::init(&cfg(FusionVariant::FusedTwoStream), 1).unwrap();
        assert_eq!(fused.num_params(), common + (h * 10 + h) + (h * h + h));
        assert_eq!(
            TrnParams::zeros(&cfg(FusionVariant::TwoStream)).num_params(),
            two.num_params()
        );
    }

    #[test]
    fn flat_roundtrip_and_seeding() {
        let c = cfg(FusionVariant::TwoStream);
        let a = TrnParams::init(&c, 7).unwrap();
        assert_eq!(a, TrnParams::init(&c, 7).unwrap());
        assert_ne!(a, TrnParams::init(&c, 8).unwrap());
        let mut b = TrnParams::zeros(&c);
        b.assign_flat(&a.to_flat()).unwrap();
        assert_eq!(a, b);
        assert!(b.assign_flat(&[0.0]).is_err());
        a.check_shapes(&c).unwrap();
        assert!(a.check_shapes(&cfg(FusionVariant::FusedTwoStream)).is_err());
    }
}
