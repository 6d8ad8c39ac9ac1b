use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, sigmoid, Matrix, NumericError, Vector};

/// Standard LSTM cell without peepholes. Gate rows are stacked in the order
/// input, forget, candidate, output, each block `hidden` rows tall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_input: Matrix,
    pub w_hidden: Matrix,
    pub bias: Vector,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Matrix::zeros(4 * hidden, input),
            w_hidden: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform `±1/√hidden` everywhere, then forget-gate bias set to +1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        let mut p = Self::zeros(input, hidden);
        for w in p
            .w_input
            .as_mut_slice()
            .iter_mut()
            .chain(p.w_hidden.as_mut_slice())
            .chain(p.bias.iter_mut())
        {
            *w = rng.random_range(-bound..bound);
        }
        for b in &mut p.bias[hidden..2 * hidden] {
            *b = 1.0;
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_input.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hidden.cols()
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub x: Vector,
    pub h_prev: Vector,
    pub c_prev: Vector,
    /// Post-activation gates `[i | f | g | o]`.
    pub gates: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
}

/// One LSTM step, returning `(h, c)`.
pub fn lstm_step(
    params: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vector, Vector), NumericError> {
    let cache = lstm_forward(params, x, h_prev, c_prev)?;
    Ok((cache.h, cache.c))
}

pub fn lstm_forward(
    params: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<LstmCache, NumericError> {
    let hidden = params.hidden_size();
    check_len("lstm_step", "input", params.input_size(), x.len())?;
    check_len("lstm_step", "hidden state", hidden, h_prev.len())?;
    check_len("lstm_step", "cell state", hidden, c_prev.len())?;

    let mut z = vec![0.0; 4 * hidden];
    params.w_input.matvec_into(x, &mut z);
    let mut zh = vec![0.0; 4 * hidden];
    params.w_hidden.matvec_into(h_prev, &mut zh);
    for ((zi, zhi), b) in z.iter_mut().zip(&zh).zip(&params.bias) {
        *zi += zhi + b;
    }

    let mut gates = z;
    for (k, v) in gates.iter_mut().enumerate() {
        *v = if (2 * hidden..3 * hidden).contains(&k) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }

    let mut c = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        let (i, f, g, o) = (
            gates[j],
            gates[hidden + j],
            gates[2 * hidden + j],
            gates[3 * hidden + j],
        );
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }

    Ok(LstmCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        c,
        tanh_c,
        h,
    })
}

/// Backward through one step given upstream `dh`, `dc`. Parameter gradients
/// are accumulated into `grads`; `dx`, `dh_prev`, `dc_prev` are accumulated
/// into as well.
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmParams,
    dx: &mut [f64],
    dh_prev: &mut [f64],
    dc_prev: &mut [f64],
) {
    let hidden = params.hidden_size();
    let g = &cache.gates;
    let mut dz = vec![0.0; 4 * hidden];
    for j in 0..hidden {
        let (i, f, cand, o) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
        let tc = cache.tanh_c[j];
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dct * cand * i * (1.0 - i);
        dz[hidden + j] = dct * cache.c_prev[j] * f * (1.0 - f);
        dz[2 * hidden + j] = dct * i * (1.0 - cand * cand);
        dz[3 * hidden + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] += dct * f;
    }
    grads.w_input.outer_acc(&dz, &cache.x);
    grads.w_hidden.outer_acc(&dz, &cache.h_prev);
    for (b, d) in grads.bias.iter_mut().zip(&dz) {
        *b += d;
    }
    params.w_input.matvec_t_acc(&dz, dx);
    params.w_hidden.matvec_t_acc(&dz, dh_prev);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{
        cross_entropy, grad_check, softmax, softmax_cross_entropy_grad, Linear, DEFAULT_FD_STEP,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Gate-by-gate scalar reference written independently of the vectorized path.
    fn scalar_reference(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let pre = |row: usize| {
            let mut s = p.bias[row];
            for (k, xv) in x.iter().enumerate() {
                s += p.w_input.get(row, k) * xv;
            }
            for (k, hv) in h.iter().enumerate() {
                s += p.w_hidden.get(row, k) * hv;
            }
            s
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h_out = vec![0.0; n];
        let mut c_out = vec![0.0; n];
        for j in 0..n {
            let i = sig(pre(j));
            let f = sig(pre(n + j));
            let g = pre(2 * n + j).tanh();
            let o = sig(pre(3 * n + j));
            c_out[j] = f * c[j] + i * g;
            h_out[j] = o * c_out[j].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn zero_params_zero_state_gives_zeros() {
        let p = LstmParams::zeros(3, 4);
        let (h, c) = lstm_step(&p, &[0.0; 3], &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
        let (h, c) = lstm_step(&p, &[1.0, -2.0, 3.0], &[0.5; 4], &[0.0; 4]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn zero_params_unit_cell_halves() {
        let p = LstmParams::zeros(2, 3);
        let (h, c) = lstm_step(&p, &[0.7, -0.1], &[0.0; 3], &[1.0; 3]).unwrap();
        for j in 0..3 {
            assert_eq!(c[j], 0.5);
            assert!((h[j] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (input, hidden) in [(1, 1), (3, 2), (5, 7), (9, 16)] {
            let p = LstmParams::init(input, hidden, &mut rng);
            let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (h1, c1) = lstm_step(&p, &x, &h, &c).unwrap();
            let (h2, c2) = scalar_reference(&p, &x, &h, &c);
            for j in 0..hidden {
                assert!((h1[j] - h2[j]).abs() < 1e-12);
                assert!((c1[j] - c2[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_step(&p, &[0.0; 2], &[0.0; 2], &[0.0; 2]).is_err());
        assert!(lstm_step(&p, &[0.0; 3], &[0.0; 3], &[0.0; 2]).is_err());
        assert!(lstm_step(&p, &[0.0; 3], &[0.0; 2], &[0.0; 1]).is_err());
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let p = LstmParams::init(2, 3, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(&p.bias[3..6], &[1.0, 1.0, 1.0]);
    }

    // lstm step followed by a classifier and cross-entropy, all inputs and
    // parameters flattened into one vector for the checker.
    #[test]
    fn single_step_cross_entropy_gradient() {
        let (input, hidden, classes) = (3, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lstm = LstmParams::init(input, hidden, &mut rng);
        let head = Linear::init(classes, hidden, &mut rng);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c0: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = 1;

        let n_in = lstm.w_input.as_slice().len();
        let n_hid = lstm.w_hidden.as_slice().len();
        let n_b = lstm.bias.len();
        let mut flat = Vec::new();
        flat.extend_from_slice(lstm.w_input.as_slice());
        flat.extend_from_slice(lstm.w_hidden.as_slice());
        flat.extend_from_slice(&lstm.bias);
        flat.extend_from_slice(&x);
        flat.extend_from_slice(&h0);
        flat.extend_from_slice(&c0);

        let unpack = |v: &[f64]| {
            let mut p = lstm.clone();
            let mut off = 0;
            p.w_input
                .as_mut_slice()
                .copy_from_slice(&v[off..off + n_in]);
            off += n_in;
            p.w_hidden
                .as_mut_slice()
                .copy_from_slice(&v[off..off + n_hid]);
            off += n_hid;
            p.bias.copy_from_slice(&v[off..off + n_b]);
            off += n_b;
            let x = v[off..off + input].to_vec();
            off += input;
            let h = v[off..off + hidden].to_vec();
            off += hidden;
            let c = v[off..off + hidden].to_vec();
            (p, x, h, c)
        };
        let loss = |v: &[f64]| {
            let (p, x, h, c) = unpack(v);
            let (h1, c1) = lstm_step(&p, &x, &h, &c).unwrap();
            // Make the loss depend on c as well as h.
            let feat: Vec<f64> = h1.iter().zip(&c1).map(|(a, b)| a + 0.3 * b).collect();
            cross_entropy(&softmax(&head.forward(&feat).unwrap()).unwrap(), label).unwrap()
        };

        let cache = lstm_forward(&lstm, &x, &h0, &c0).unwrap();
        let feat: Vec<f64> = cache
            .h
            .iter()
            .zip(&cache.c)
            .map(|(a, b)| a + 0.3 * b)
            .collect();
        let p = softmax(&head.forward(&feat).unwrap()).unwrap();
        let dlogits = softmax_cross_entropy_grad(&p, label, 1.0);
        let mut head_grads = Linear::zeros(classes, hidden);
        let mut dfeat = vec![0.0; hidden];
        head.backward(&feat, &dlogits, &mut head_grads, Some(&mut dfeat));
        let dc: Vec<f64> = dfeat.iter().map(|d| 0.3 * d).collect();
        let mut grads = LstmParams::zeros(input, hidden);
        let (mut dx, mut dh0, mut dc0) = (vec![0.0; input], vec![0.0; hidden], vec![0.0; hidden]);
        lstm_backward(
            &lstm, &cache, &dfeat, &dc, &mut grads, &mut dx, &mut dh0, &mut dc0,
        );

        let mut analytic = Vec::new();
        analytic.extend_from_slice(grads.w_input.as_slice());
        analytic.extend_from_slice(grads.w_hidden.as_slice());
        analytic.extend_from_slice(&grads.bias);
        analytic.extend_from_slice(&dx);
        analytic.extend_from_slice(&dh0);
        analytic.extend_from_slice(&dc0);

        let report = grad_check(loss, &flat, &analytic, DEFAULT_FD_STEP).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
