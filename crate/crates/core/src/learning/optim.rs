//! AdamW with decoupled weight decay and a two-stage learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    /// Multiplier applied once the switch epoch is reached.
    pub decay: f64,
    /// Fraction of the epochs run at the base rate.
    pub switch_fraction: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { base_lr: 3e-4, decay: 0.1, switch_fraction: 0.9 }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) || !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::Config("learning rate and decay must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.switch_fraction) {
            return Err(Error::Config("switch_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// First zero-based epoch that uses the decayed rate.
    pub fn switch_epoch(&self, epochs: usize) -> usize {
        (self.switch_fraction * epochs as f64).round() as usize
    }

    pub fn lr_at(&self, epoch: usize, epochs: usize) -> f64 {
        if epoch < self.switch_epoch(epochs) {
            self.base_lr
        } else {
            self.base_lr * self.decay
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: ParamSet,
    v: ParamSet,
}

impl AdamW {
    pub fn new(params: &ParamSet, weight_decay: f64) -> Self {
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<()> {
        if !params.same_layout(grads) {
            return Err(Error::Shape("gradient layout differs from parameters".into()));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.tensors.iter_mut().zip(&grads.tensors).zip(&mut self.m.tensors).zip(&mut self.v.tensors) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let update = (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + self.eps);
                p.data[i] -= lr * (update + self.weight_decay * p.data[i]);
            }
        }
        Ok(())
    }
}
