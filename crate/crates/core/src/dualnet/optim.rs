use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::Denoiser;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 2e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, clip_norm: 1.0 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.clip_norm >= 0.0
            && self.clip_norm.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Adam with bias correction. Moment buffers follow `Denoiser::tensors`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, model: &Denoiser) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Ok(Self { config, step: 0, m: zeros.clone(), v: zeros })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. An all-zero gradient leaves both the model and
    /// the optimizer state untouched; returns whether an update happened.
    pub fn step(&mut self, model: &mut Denoiser, grad: &Denoiser) -> Result<bool> {
        let grads = grad.tensors();
        let sq: f64 = grads.iter().flat_map(|(_, _, g)| g.iter()).map(|g| g * g).sum();
        if !sq.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        if sq == 0.0 {
            return Ok(false);
        }
        let norm = sq.sqrt();
        let clip = if self.config.clip_norm > 0.0 && norm > self.config.clip_norm { self.config.clip_norm / norm } else { 1.0 };
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((_, _, p), (_, _, g)), (m, v)) in
            model.tensors_mut().into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                p[i] -= learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + epsilon);
            }
        }
        Ok(true)
    }
}
