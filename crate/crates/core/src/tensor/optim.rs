use super::graph::Gradients;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            clip_norm: Some(1.0),
        }
    }
}

/// Inverse square-root schedule with linear warmup:
/// `factor * dim^-0.5 * min(step^-0.5, step * warmup^-1.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoamSchedule {
    pub dim: usize,
    pub warmup: u64,
    pub factor: f64,
}

impl NoamSchedule {
    pub fn rate(&self, step: u64) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup.max(1) as f64;
        self.factor * (self.dim as f64).powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &ParamStore<f32>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update at learning rate `lr`; returns the pre-clip
    /// gradient norm.
    pub fn update(&mut self, params: &mut ParamStore<f32>, grads: &Gradients<f32>, lr: f64) -> Result<f64> {
        if self.m.len() != params.len() {
            return Err(Error::config("optimizer state does not match parameters"));
        }
        let norm = grads.global_norm();
        if !norm.is_finite() {
            return Err(Error::Numerical(format!("non-finite gradient norm at step {}", self.step + 1)));
        }
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => (c / norm) as f32,
            _ => 1.0,
        };
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let alpha = (lr * bc2.sqrt() / bc1) as f32;
        let eps = (c.eps * bc2.sqrt()) as f32;
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id) else { continue };
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (((w, &g), m), v) in params.get_mut(id).data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g * clip;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= alpha * *m / (v.sqrt() + eps);
            }
        }
        Ok(norm)
    }
}
