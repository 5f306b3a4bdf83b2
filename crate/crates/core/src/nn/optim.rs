use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over every parameter group of `models`, in order.
    ///
    /// A non-finite gradient aborts the step before anything is modified.
    pub fn step(&mut self, models: &mut [&mut dyn Parameters], lr: f64) -> Result<()> {
        let mut group = 0;
        let mut bad = None;
        let mut sizes = Vec::new();
        for m in models.iter() {
            m.visit(&mut |p, g| {
                if bad.is_none() && g.iter().any(|v| !v.is_finite()) {
                    bad = Some(group);
                }
                sizes.push(p.len());
                group += 1;
            });
        }
        if let Some(group) = bad {
            return Err(Error::NonFiniteGradient { group });
        }
        if self.first.is_empty() {
            self.first = sizes.iter().map(|&n| vec![0.0; n]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != sizes.len()
            || self.first.iter().zip(&sizes).any(|(m, &n)| m.len() != n)
        {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }

        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;
        let (first, second) = (&mut self.first, &mut self.second);
        let mut k = 0;
        for m in models.iter_mut() {
            m.visit_mut(&mut |p, g| {
                let (m1, m2) = (&mut first[k], &mut second[k]);
                for i in 0..p.len() {
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
                    let m_hat = m1[i] / bc1;
                    let v_hat = m2[i] / bc2;
                    p[i] = p[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
                }
                k += 1;
            });
        }
        Ok(())
    }
}

/// Cosine annealing from `base_lr` to 0 over `total_steps`, no warmup or restarts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub total_steps: u64,
}

impl CosineSchedule {
    pub fn new(base_lr: f64, total_steps: u64) -> Self {
        Self {
            base_lr,
            total_steps,
        }
    }

    pub fn lr(&self, step: u64) -> f64 {
        if self.total_steps == 0 {
            return self.base_lr;
        }
        let s = step.min(self.total_steps) as f64 / self.total_steps as f64;
        self.base_lr * 0.5 * (1.0 + (PI * s).cos())
    }
}
