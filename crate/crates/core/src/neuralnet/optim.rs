//! Slanted-triangular schedule, layer-wise decay and the AdamW update.

use super::params::ParamStore;
use super::TrainConfig;
use crate::error::{Error, Result};

/// Learning rate for optimizer step `step` of `total_steps`.
///
/// Rises linearly from 0 to `peak_lr` at `ceil(warmup_fraction * total)`,
/// then falls linearly to exactly 0 at `total`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidArgument("total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} is past the end of a {total_steps}-step schedule"
        )));
    }
    let warm = ((cfg.warmup_fraction * total_steps as f64).ceil() as usize).clamp(1, total_steps);
    let peak = cfg.peak_lr;
    if step == total_steps && warm < total_steps {
        return Ok(0.0);
    }
    if step <= warm {
        if step == warm {
            return Ok(peak);
        }
        return Ok(peak * step as f64 / warm as f64);
    }
    Ok(peak * (total_steps - step) as f64 / (total_steps - warm) as f64)
}

/// `tau^depth`; depth 0 is the output head.
pub fn layer_multiplier(depth: usize, tau: f64) -> f64 {
    tau.powi(depth as i32)
}

/// Adam with decoupled weight decay and per-parameter layer-wise scaling.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub layer_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore, cfg: &TrainConfig) -> Self {
        let sizes = store.sizes();
        AdamW {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            layer_decay: cfg.layer_decay,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update with base rate `lr`; each parameter moves with
    /// `lr * layer_multiplier(depth)`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in store.params_mut().iter_mut().enumerate() {
            let g = &grads[i];
            let rate = lr * layer_multiplier(p.depth, self.layer_decay);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.tensor.data.iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                let denom = v_hat.sqrt() + self.eps;
                let adam = if denom > 0.0 { m_hat / denom } else { 0.0 };
                *w -= rate * (adam + self.weight_decay * *w);
            }
        }
        Ok(())
    }
}
