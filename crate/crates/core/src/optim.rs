//! Adam with bias correction.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.lr > 0.0 && self.lr.is_finite(), "learning rate must be positive, got {}", self.lr);
        ensure!((0.0..1.0).contains(&self.beta1), "beta1 must lie in [0, 1), got {}", self.beta1);
        ensure!((0.0..1.0).contains(&self.beta2), "beta2 must lie in [0, 1), got {}", self.beta2);
        ensure!(self.epsilon > 0.0, "epsilon must be positive, got {}", self.epsilon);
        Ok(())
    }
}

/// One Adam update of a flat parameter buffer, in any float precision.
///
/// With `t` the step number after incrementing (so `t ≥ 1`):
///
/// ```text
/// m ← β₁m + (1 − β₁)g        m̂ = m / (1 − β₁ᵗ)
/// v ← β₂v + (1 − β₂)g²       v̂ = v / (1 − β₂ᵗ)
/// p ← p − lr · m̂ / (√v̂ + ε)
/// ```
pub fn adam_update<T: Float>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig) {
    assert!(params.len() == grads.len() && m.len() == params.len() && v.len() == params.len());
    let cast = |x: f64| T::from(x).expect("hyperparameter representable in the float type");
    let (lr, b1, b2, eps) = (cast(cfg.lr), cast(cfg.beta1), cast(cfg.beta2), cast(cfg.epsilon));
    let one = T::one();
    let step = i32::try_from(t).unwrap_or(i32::MAX);
    let bc1 = one - b1.powi(step);
    let bc2 = one - b2.powi(step);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Moment estimates for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    /// Zeroed moments mirroring `shapes`.
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        config.validate()?;
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.dims())).collect();
        let v = m.clone();
        Ok(Self { config, m, v, t: 0 })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Applies one update to every `(parameter, gradient)` pair.
    pub fn step(&mut self, pairs: Vec<(&mut Tensor, &Tensor)>) -> Result<()> {
        ensure!(pairs.len() == self.m.len(), "optimiser tracks {} tensors, got {}", self.m.len(), pairs.len());
        for (i, (p, g)) in pairs.iter().enumerate() {
            ensure!(
                p.shape() == g.shape() && p.shape() == self.m[i].shape(),
                "tensor {i}: parameter {}, gradient {}, moments {}",
                p.shape(),
                g.shape(),
                self.m[i].shape()
            );
        }
        self.t += 1;
        for ((p, g), (m, v)) in pairs.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            adam_update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), self.t, &self.config);
        }
        Ok(())
    }
}

/// `adam_step` over separate parameter and gradient lists.
pub fn adam_step(state: &mut AdamState, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
    ensure!(params.len() == grads.len(), "{} parameters but {} gradients", params.len(), grads.len());
    state.step(params.iter_mut().zip(grads).collect())
}
