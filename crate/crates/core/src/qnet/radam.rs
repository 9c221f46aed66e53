//! Rectified adaptive-moment optimizer.
//!
//! Follows the rectified-Adam recursion: exponential first/second
//! moments with bias correction, and a variance-rectification term that
//! only engages once the approximated second-moment degrees of freedom
//! `ρ_t` exceed 4; before that the update is momentum-only (no division
//! by the second moment). With `β2 = 0.999` the switch happens at step
//! 5. A multiplicative `lr_scale` hook implements the step-wise
//! learning-rate schedule (halving, by default, every 500k frames).

use serde::{Deserialize, Serialize};

use super::{Grads, QNet, QNetError};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RAdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for RAdamConfig {
    fn default() -> Self {
        RAdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state: one moment pair per parameter.
pub struct RAdam {
    cfg: RAdamConfig,
    /// Step counter; increments once per `step` call.
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    /// External learning-rate multiplier (schedule hook).
    lr_scale: f64,
    /// `ρ_∞ = 2/(1−β2) − 1`.
    rho_inf: f64,
}

impl RAdam {
    pub fn new(cfg: RAdamConfig, param_count: usize) -> Self {
        let rho_inf = 2.0 / (1.0 - cfg.beta2) - 1.0;
        RAdam { cfg, t: 0, m: vec![0.0; param_count], v: vec![0.0; param_count], lr_scale: 1.0, rho_inf }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn lr_scale(&self) -> f64 {
        self.lr_scale
    }

    pub fn set_lr_scale(&mut self, scale: f64) {
        self.lr_scale = scale;
    }

    pub fn config(&self) -> &RAdamConfig {
        &self.cfg
    }

    /// One update. Rejects non-finite gradients without touching the
    /// parameters or the moments.
    pub fn step(&mut self, net: &mut QNet, grads: &Grads) -> Result<(), QNetError> {
        assert_eq!(grads.0.len(), self.m.len(), "gradient/moment shape");
        if let Some(index) = grads.0.iter().position(|g| !g.is_finite()) {
            return Err(QNetError::NonFiniteGradient { index });
        }
        self.t += 1;
        let t = self.t as f64;
        let RAdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bias1 = 1.0 - beta1.powf(t);
        let bias2 = 1.0 - beta2.powf(t);
        let rho = self.rho_inf - 2.0 * t * beta2.powf(t) / bias2;
        let lr_t = lr * self.lr_scale;

        let rect = if rho > 4.0 {
            Some(
                (((rho - 4.0) * (rho - 2.0) * self.rho_inf)
                    / ((self.rho_inf - 4.0) * (self.rho_inf - 2.0) * rho))
                    .sqrt(),
            )
        } else {
            None
        };

        for ((w, g), (m, v)) in
            net.flat_mut().zip(&grads.0).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            match rect {
                Some(r) => {
                    let v_hat = (*v / bias2).sqrt();
                    *w -= lr_t * r * m_hat / (v_hat + eps);
                }
                None => *w -= lr_t * m_hat,
            }
        }
        Ok(())
    }
}

/// Step-wise schedule: learning rate halves every `halve_every` frames.
pub fn lr_scale_at(frame: u64, halve_every: u64) -> f64 {
    if halve_every == 0 {
        return 1.0;
    }
    0.5f64.powi((frame / halve_every) as i32)
}
