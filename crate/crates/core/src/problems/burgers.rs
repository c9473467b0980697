//! Viscous Burgers reference via the Cole–Hopf transform.
//!
//! With `φ0(y) = exp(-cos(πy) / (2πν))` the solution for the initial state
//! `-sin(πx)` is
//!
//! ```text
//! u(x,t) = ∫ -sin(π(x-η)) φ0(x-η) G(η,t) dη / ∫ φ0(x-η) G(η,t) dη
//! ```
//!
//! with the heat kernel `G ∝ exp(-η²/(4νt))`. The integrals run over the
//! whole line; the odd, 2-periodic initial state makes `u(0,t) = u(1,t) = 0`
//! automatically. Exponents reach `±1/(2πν)`, so the sums are accumulated
//! relative to their largest term.

use std::f64::consts::PI;

use crate::error::Result;

use super::check_positive;

pub fn initial(x: f64) -> f64 {
    -(PI * x).sin()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColeHopf {
    pub nu: f64,
    /// Quadrature nodes per narrowest feature width.
    pub nodes_per_width: f64,
}

impl ColeHopf {
    pub fn new(nu: f64) -> Result<Self> {
        check_positive("nu", nu)?;
        Ok(Self {
            nu,
            nodes_per_width: 8.0,
        })
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return initial(x);
        }
        let nu = self.nu;
        let a = 1.0 / (2.0 * PI * nu);
        let s = 4.0 * nu * t;
        // Beyond |η| = W the Gaussian factor is e^-40 below anything the
        // cosine factor can compensate.
        let w = (s * (2.0 * a + 40.0)).sqrt();
        let width = (0.5 * s).sqrt().min((2.0 * nu / PI).sqrt());
        let n = ((2.0 * w) / (width / self.nodes_per_width)).ceil() as usize;
        let h = 2.0 * w / n as f64;

        let exponent = |eta: f64| -a * (PI * (x - eta)).cos() - eta * eta / s;
        let mut e_max = f64::NEG_INFINITY;
        for k in 0..=n {
            e_max = e_max.max(exponent(-w + k as f64 * h));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..=n {
            let eta = -w + k as f64 * h;
            let g = (exponent(eta) - e_max).exp();
            num += initial(x - eta) * g;
            den += g;
        }
        num / den
    }
}
