use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::Parameterized;
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment buffers laid out block-by-block like the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new<P: Parameterized>(params: &P, config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(config_err!("learning rate must be positive, got {}", config.learning_rate));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(config_err!("Adam betas must lie in [0, 1)"));
        }
        let shapes: Vec<usize> = params.blocks().iter().map(|(_, b)| b.len()).collect();
        Ok(Self {
            config,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One bias-corrected Adam update. Gradients are validated before any
    /// parameter is touched.
    pub fn step<P: Parameterized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        if grad_blocks.len() != self.first.len() {
            return Err(config_err!(
                "optimizer tracks {} blocks, got {}",
                self.first.len(),
                grad_blocks.len()
            ));
        }
        for ((name, g), m) in grad_blocks.iter().zip(&self.first) {
            if g.len() != m.len() {
                return Err(config_err!("gradient block {name} has {} values, expected {}", g.len(), m.len()));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Training(format!("non-finite gradient in {name}[{i}]")));
            }
        }
        let mut param_blocks = params.blocks_mut();
        if param_blocks.len() != grad_blocks.len()
            || param_blocks.iter().zip(&grad_blocks).any(|((_, p), (_, g))| p.len() != g.len())
        {
            return Err(config_err!("parameter and gradient layouts differ"));
        }

        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - libm::pow(beta1, t as f64);
        let correction2 = 1.0 - libm::pow(beta2, t as f64);
        for (b, ((_, p), (_, g))) in param_blocks.iter_mut().zip(&grad_blocks).enumerate() {
            let m = &mut self.first[b];
            let v = &mut self.second[b];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}
