use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::latent::LatentBlock;

/// Discrete forward-diffusion schedule with linear betas.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Cumulative products of `alphas`.
    pub alpha_bars: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    /// 200 steps with the usual 1000-step linear range rescaled by 1000/200.
    fn default() -> Self {
        Self { steps: 200, beta_start: 5e-4, beta_end: 0.1 }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        NoiseSchedule::linear(self).map(|_| ())
    }
}

impl NoiseSchedule {
    pub fn linear(cfg: &ScheduleConfig) -> Result<Self> {
        let t = cfg.steps;
        if t == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        let betas: Vec<f64> = (0..t)
            .map(|i| {
                if t == 1 {
                    cfg.beta_start
                } else {
                    cfg.beta_start + (cfg.beta_end - cfg.beta_start) * i as f64 / (t - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Config("betas must lie strictly inside (0, 1)".into()));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, &a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self { betas, alphas, alpha_bars })
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }
}

/// `sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps`.
pub fn add_noise(x0: &LatentBlock, t: usize, eps: &LatentBlock, sched: &NoiseSchedule) -> Result<LatentBlock> {
    if t >= sched.len() {
        return Err(Error::Parameter(format!("timestep {t} outside 0..{}", sched.len())));
    }
    if x0.shape() != eps.shape() {
        return Err(Error::Shape("noise and latent shapes differ".into()));
    }
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x0.data.iter().zip(&eps.data).map(|(&x, &e)| a * x + b * e).collect();
    Ok(LatentBlock { data, ..x0.clone() })
}
