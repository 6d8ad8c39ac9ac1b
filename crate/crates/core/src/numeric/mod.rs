//! Dense linear algebra and the differentiable building blocks of the network:
//! affine layers, LSTM cells, softmax and cross-entropy, each with an exact
//! reverse-mode gradient, plus a central-difference gradient checker.
//!
//! Everything here runs in `f64`. Gradient buffers share the type of the
//! parameters they belong to and are always accumulated into (`+=`), so that
//! backpropagation through time can sum contributions across steps.

mod gradcheck;
mod lstm;
mod matrix;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_FD_STEP};
pub use lstm::{lstm_backward, lstm_forward, lstm_step, LstmCache, LstmParams};
pub use matrix::{all_finite, dot, Matrix, Vector};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{0} requires a non-empty input")]
    Empty(&'static str),
}

pub(crate) fn check_len(
    op: &'static str,
    what: &str,
    expected: usize,
    found: usize,
) -> Result<(), NumericError> {
    if expected == found {
        Ok(())
    } else {
        Err(NumericError::DimensionMismatch {
            op,
            expected: format!("{what} of length {expected}"),
            found: format!("length {found}"),
        })
    }
}

/// Affine layer `y = W·x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform in `±1/√fan_in` for both weight and bias.
    pub fn init<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let mut layer = Self::zeros(out_dim, in_dim);
        for w in layer.weight.as_mut_slice() {
            *w = rng.random_range(-bound..bound);
        }
        for b in &mut layer.bias {
            *b = rng.random_range(-bound..bound);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vector, NumericError> {
        linear(&self.weight, &self.bias, x)
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vector {
        let mut y = vec![0.0; self.out_dim()];
        self.weight.matvec_into(x, &mut y);
        for (yi, bi) in y.iter_mut().zip(&self.bias) {
            *yi += bi;
        }
        y
    }

    /// Accumulates `dW += dy·xᵀ`, `db += dy` into `grads` and, when asked,
    /// `dx += Wᵀ·dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Linear, dx: Option<&mut [f64]>) {
        grads.weight.outer_acc(dy, x);
        for (g, d) in grads.bias.iter_mut().zip(dy) {
            *g += d;
        }
        if let Some(dx) = dx {
            self.weight.matvec_t_acc(dy, dx);
        }
    }
}

/// `y = W·x + b` with both shapes reported on mismatch.
pub fn linear(w: &Matrix, b: &[f64], x: &[f64]) -> Result<Vector, NumericError> {
    if w.cols() != x.len() || w.rows() != b.len() {
        return Err(NumericError::DimensionMismatch {
            op: "linear",
            expected: format!(
                "W {}x{} with b[{}] and x[{}]",
                w.rows(),
                w.cols(),
                w.rows(),
                w.cols()
            ),
            found: format!("b[{}] and x[{}]", b.len(), x.len()),
        });
    }
    let mut y = w.matvec(x)?;
    for (yi, bi) in y.iter_mut().zip(b) {
        *yi += bi;
    }
    Ok(y)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_in_place(output: &[f64], grad: &mut [f64]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64]) -> Result<Vector, NumericError> {
    if z.is_empty() {
        return Err(NumericError::Empty("softmax"));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vector = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

/// `−ln p[label]` with `p[label]` clamped to [`PROB_FLOOR`].
pub fn cross_entropy(p: &[f64], label: usize) -> Result<f64, NumericError> {
    if label >= p.len() {
        return Err(NumericError::LabelOutOfRange {
            label,
            classes: p.len(),
        });
    }
    Ok(-p[label].max(PROB_FLOOR).ln())
}

/// Gradient of `cross_entropy(softmax(z), label)` with respect to `z`, scaled.
pub fn softmax_cross_entropy_grad(p: &[f64], label: usize, scale: f64) -> Vector {
    let mut d: Vector = p.iter().map(|&pi| pi * scale).collect();
    d[label] -= scale;
    d
}
