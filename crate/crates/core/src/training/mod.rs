//! Loss assembly for teacher and student, the optimizer and the two-stage
//! training pipeline.

pub mod adam;
pub mod loss;
pub mod pipeline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::Adam;
pub use loss::{assemble_loss, LossInputs};
pub use pipeline::{distill_student, history_csv, train_teacher, TrainOutcome};

/// `½r²` for `|r| ≤ δ`, `δ(|r| - ½δ)` beyond.
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber`] with respect to `r`.
pub fn huber_grad(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

/// `KL(N(μ_T, σ_T²) ‖ N(μ_φ, σ_φ²))`.
pub fn kl_gaussian(mu_t: f64, sigma_t: f64, mu_s: f64, sigma_s: f64) -> f64 {
    let d = mu_t - mu_s;
    (sigma_s / sigma_t).ln() + (sigma_t * sigma_t + d * d) / (2.0 * sigma_s * sigma_s) - 0.5
}

/// Linear ramp `min(1, iter / T_c)`.
pub fn curriculum(iter: usize, t_c: usize) -> f64 {
    (iter as f64 / t_c.max(1) as f64).min(1.0)
}

/// How a mismatch is penalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// Squared error.
    Mse,
    /// Huber with the weights' `huber_delta`.
    Huber,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_pde: f64,
    pub w_bc: f64,
    pub w_term: f64,
    pub w_ic: f64,
    pub w_kd: f64,
    /// Distillation temperature.
    pub tau: f64,
    /// Huber threshold for the constraint terms; `None` means squared
    /// error.
    pub huber_delta: Option<f64>,
    pub kd_penalty: Penalty,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_pde: 1.0,
            w_bc: 12.0,
            w_term: 15.0,
            w_ic: 15.0,
            w_kd: 1.5,
            tau: 1.25,
            huber_delta: Some(1.0),
            kd_penalty: Penalty::Mse,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_pde, self.w_bc, self.w_term, self.w_ic, self.w_kd];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "loss weights must be finite and >= 0: {w:?}"
            )));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidParameter("all loss weights are zero".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("temperature {}", self.tau)));
        }
        if let Some(d) = self.huber_delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("huber delta {d}")));
            }
        }
        if self.kd_penalty == Penalty::Huber && self.huber_delta.is_none() {
            return Err(Error::InvalidParameter(
                "huber distillation penalty needs huber_delta".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSizes {
    pub collocation: usize,
    pub boundary: usize,
    /// Used for terminal or initial sets, whichever the problem has.
    pub terminal: usize,
    pub distillation: usize,
}

impl Default for BatchSizes {
    fn default() -> Self {
        Self {
            collocation: 4096,
            boundary: 256,
            terminal: 512,
            distillation: 4096,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointRule {
    /// Parameters with the lowest total loss (at full curriculum weight).
    BestTotal,
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub fine_tune_iterations: usize,
    pub learning_rate: f64,
    pub fine_tune_lr: f64,
    pub batches: BatchSizes,
    pub weights: LossWeights,
    /// `T_c` as a fraction of `iterations`; `None` disables the ramp.
    /// Only student training uses it.
    pub curriculum_fraction: Option<f64>,
    /// Residual-informed collocation weights (student training only).
    pub informed_eta: Option<f64>,
    pub seed: u64,
    pub checkpoint_rule: CheckpointRule,
    /// Reference RMSE probe cadence in iterations; 0 disables probes.
    pub probe_every: usize,
    /// Parameter snapshot cadence in iterations; 0 keeps none.
    #[serde(default)]
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 8000,
            fine_tune_iterations: 300,
            learning_rate: 1e-3,
            fine_tune_lr: 1e-4,
            batches: BatchSizes::default(),
            weights: LossWeights::default(),
            curriculum_fraction: None,
            informed_eta: None,
            seed: 0,
            checkpoint_rule: CheckpointRule::BestTotal,
            probe_every: 50,
            snapshot_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        for lr in [self.learning_rate, self.fine_tune_lr] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidParameter(format!("learning rate {lr}")));
            }
        }
        let b = &self.batches;
        if b.collocation == 0 || b.boundary == 0 || b.terminal == 0 || b.distillation == 0 {
            return Err(Error::InvalidParameter(format!(
                "batch sizes must be >= 1: {b:?}"
            )));
        }
        if let Some(f) = self.curriculum_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "curriculum fraction {f} not in (0, 1]"
                )));
            }
        }
        if let Some(eta) = self.informed_eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::InvalidParameter(format!("informed eta {eta}")));
            }
        }
        self.weights.validate()
    }

    /// Curriculum length in iterations.
    pub fn curriculum_iterations(&self) -> Option<usize> {
        self.curriculum_fraction
            .map(|f| ((f * self.iterations as f64).round() as usize).max(1))
    }

    pub fn total_iterations(&self) -> usize {
        self.iterations + self.fine_tune_iterations
    }
}

/// Loss terms of one iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// 1-based iteration number.
    pub iter: usize,
    pub l_pde: f64,
    pub l_bc: f64,
    pub l_term: f64,
    pub l_ic: f64,
    pub l_kd: f64,
    /// Curriculum factor applied to the physics terms.
    pub curriculum: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub rmse_probe: Option<f64>,
}

impl LossBreakdown {
    /// `c·(w_pde L_pde + w_bc L_bc + w_term L_term + w_ic L_ic) + w_kd L_kd`.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        self.curriculum
            * (w.w_pde * self.l_pde
                + w.w_bc * self.l_bc
                + w.w_term * self.l_term
                + w.w_ic * self.l_ic)
            + w.w_kd * self.l_kd
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, 1.0), 0.0);
        assert_eq!(huber(2.0, 0.5), 0.875);
        let d = 0.7;
        assert!((huber(d, d) - 0.5 * d * d).abs() < 1e-16);
        assert_eq!(huber(-3.0, 1.0), huber(3.0, 1.0));
    }

    #[test]
    fn huber_is_continuous_at_threshold() {
        for d in [0.1, 1.0, 2.5] {
            let (a, b) = (huber(d - 1e-9, d), huber(d + 1e-9, d));
            assert!((a - b).abs() < 1e-8);
            let (ga, gb) = (huber_grad(d - 1e-9, d), huber_grad(d + 1e-9, d));
            assert!((ga - gb).abs() < 1e-8);
        }
    }

    #[test]
    fn curriculum_endpoints() {
        assert_eq!(curriculum(0, 1000), 0.0);
        assert_eq!(curriculum(500, 1000), 0.5);
        assert_eq!(curriculum(1000, 1000), 1.0);
        assert_eq!(curriculum(5000, 1000), 1.0);
    }

    #[test]
    fn kl_equal_variance_reduces_to_squared_gap() {
        let (mt, ms, s) = (0.3, -0.2, 0.7);
        assert!((kl_gaussian(mt, s, ms, s) - (mt - ms) * (mt - ms) / (2.0 * s * s)).abs() < 1e-15);
        assert_eq!(kl_gaussian(1.0, 2.0, 1.0, 2.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.weights.tau = 0.0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            iterations: 5000,
            curriculum_fraction: Some(0.2),
            ..TrainConfig::default()
        };
        assert_eq!(c.curriculum_iterations(), Some(1000));
    }
}
