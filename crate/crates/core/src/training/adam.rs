use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::ParamGradient;

/// Adam with bias-corrected moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &ParamGradient, lr: f64) -> Result<()> {
        let g = grad.values();
        if g.len() != params.len() || g.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state {} / params {} / gradient {}",
                self.m.len(),
                params.len(),
                g.len()
            )));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {bad}")));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, &gi), m), v) in params.iter_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * gi;
            *v = b2 * *v + (1.0 - b2) * gi * gi;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut a = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        a.step(&mut p, &ParamGradient::zeros(3), 1e-3).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut a = Adam::new(3);
        let mut p = vec![0.0; 3];
        a.step(&mut p, &ParamGradient::new(vec![3.0, -0.01, 1e3]), 1e-3)
            .unwrap();
        for (pi, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((pi - s * 1e-3).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut a = Adam::new(2);
        let mut p = vec![0.0; 2];
        assert!(a
            .step(&mut p, &ParamGradient::new(vec![f64::NAN, 0.0]), 1e-3)
            .is_err());
        assert!(a.step(&mut p, &ParamGradient::zeros(3), 1e-3).is_err());
    }
}
