use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Learning-rate multiplier over the course of training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Decays linearly from the base rate to zero at the last step.
    Linear,
}

impl LrSchedule {
    /// Multiplier for the 0-based `step` out of `total` steps.
    pub fn factor(self, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Linear if total == 0 => 1.0,
            LrSchedule::Linear => 1.0 - step.min(total) as f64 / total as f64,
        }
    }
}

/// First/second moment accumulators mirroring a parameter list.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix>, config: AdamWConfig) -> Self {
        let first: Vec<Matrix> = params.into_iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        let second = first.clone();
        Self {
            config,
            first,
            second,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One AdamW update with bias-corrected moments and decoupled weight decay:
///
/// ```text
/// p ← p − lr·λ·p
/// m ← β₁m + (1−β₁)g,  v ← β₂v + (1−β₂)g²
/// p ← p − lr · (m / (1−β₁ᵗ)) / (√(v / (1−β₂ᵗ)) + ε)
/// ```
pub fn adamw_step(params: &mut [&mut Matrix], grads: &[Matrix], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::dim(
            "adamw_step parameter count",
            state.first.len(),
            format!("{} params, {} grads", params.len(), grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::dim(
                "adamw_step parameter shape",
                format!("{:?}", state.first[i].shape()),
                format!("param {:?}, grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    let cfg = state.config;
    if !(cfg.lr >= 0.0) || !cfg.lr.is_finite() {
        return Err(Error::Contract(format!("learning rate must be finite and non-negative, got {}", cfg.lr)));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first[i].as_mut_slice();
        let v = state.second[i].as_mut_slice();
        for (k, (pv, &gv)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
            *pv *= decay;
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gv;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gv * gv;
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            *pv -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
