use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Named hyperparameter presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdamPreset {
    /// beta1 = 0.9, beta2 = 0.999.
    #[default]
    Standard,
    /// beta1 = beta2 = 0.1.
    Fairclip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled (AdamW-style) weight decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::preset(AdamPreset::Standard)
    }
}

impl AdamConfig {
    pub fn preset(preset: AdamPreset) -> Self {
        let (beta1, beta2) = match preset {
            AdamPreset::Standard => (0.9, 0.999),
            AdamPreset::Fairclip => (0.1, 0.1),
        };
        Self {
            learning_rate: 1e-5,
            beta1,
            beta2,
            epsilon: 1e-8,
            weight_decay: 6e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.learning_rate) {
            return Err(Error::config("train.learning_rate", "must be non-negative"));
        }
        for (name, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("train.adam_epsilon", "must be positive"));
        }
        if !ok(self.weight_decay) {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// Fresh state with zero moments shaped like `blocks`.
    pub fn new(config: AdamConfig, blocks: &[&[f64]]) -> Self {
        let zeros: Vec<Vec<f64>> = blocks.iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            config,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }
}

/// One Adam step with decoupled weight decay. Parameters are left untouched
/// when any gradient is non-finite.
pub fn optimizer_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Shape(format!(
            "{} parameter blocks, {} gradient blocks, {} moment blocks",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (k, ((p, g), m)) in params.iter().zip(grads).zip(&state.first_moment).enumerate() {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::Shape(format!("block {k} has mismatched lengths")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(k));
        }
    }

    let c = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - c.beta1.powi(t);
    let bias2 = 1.0 - c.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        for i in 0..p.len() {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * p[i]);
        }
    }
    Ok(())
}
