use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::model::{Gradients, TrnParams};

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: TrnParams,
    pub v: TrnParams,
}

impl AdamState {
    pub fn new(params: &TrnParams) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    /// One bias-corrected Adam update with decoupled weight decay on a flat
    /// tensor. `step` is the 1-based timestep after increment.
    pub fn update(&self, theta: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], step: u64) {
        let bc1 = 1.0 - self.beta1.powi(step as i32);
        let bc2 = 1.0 - self.beta2.powi(step as i32);
        let decay = self.learning_rate * self.weight_decay;
        for i in 0..theta.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -=
                self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon) + decay * theta[i];
        }
    }
}

/// Applies one Adam step to every tensor. Gradients are validated up front so
/// a non-finite value leaves parameters and moments untouched.
pub fn adam_step(
    params: &mut TrnParams,
    grads: &Gradients,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    let grad_tensors = grads.tensors();
    let param_names: Vec<&str> = params.tensors().iter().map(|t| t.name).collect();
    if grad_tensors.len() != param_names.len()
        || grad_tensors
            .iter()
            .zip(params.tensors())
            .any(|(g, p)| g.data.len() != p.data.len())
    {
        return Err(TrainError::GradientShape);
    }
    for t in &grad_tensors {
        if let Some(idx) = t.data.iter().position(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient {
                tensor: t.name,
                index: idx,
            });
        }
    }
    let hyper = config.adam_hyper();
    state.step += 1;
    let step = state.step;
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for ((((_, theta), g), (_, m)), (_, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(&grad_tensors)
        .zip(ms)
        .zip(vs)
    {
        hyper.update(theta, g.data, m, v, step);
    }
    Ok(())
}
