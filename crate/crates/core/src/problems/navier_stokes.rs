//! Taylor–Green vortex, an exact decaying solution of 2-D incompressible
//! Navier–Stokes on the periodic square (0, 2π)².

use crate::error::Result;
use crate::jets::Jet2;

use super::check_positive;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorGreen {
    pub nu: f64,
}

/// Jet in (x, y, t) of `f(x, y) e^{-λt}` given the spatial value, gradient
/// and Hessian of `f`.
fn separable_jet(f: f64, df: [f64; 2], d2f: [[f64; 2]; 2], lambda: f64, t: f64) -> Jet2 {
    let e = (-lambda * t).exp();
    let mut j = Jet2::constant(f * e, 3);
    let g = j.grad_mut();
    g[0] = df[0] * e;
    g[1] = df[1] * e;
    g[2] = -lambda * f * e;
    j.set_hess(0, 0, d2f[0][0] * e);
    j.set_hess(0, 1, d2f[0][1] * e);
    j.set_hess(1, 1, d2f[1][1] * e);
    j.set_hess(0, 2, -lambda * df[0] * e);
    j.set_hess(1, 2, -lambda * df[1] * e);
    j.set_hess(2, 2, lambda * lambda * f * e);
    j
}

impl TaylorGreen {
    pub fn new(nu: f64) -> Result<Self> {
        check_positive("nu", nu)?;
        Ok(Self { nu })
    }

    /// `(u, v, p)`.
    pub fn eval(&self, x: f64, y: f64, t: f64) -> [f64; 3] {
        let f = (-2.0 * self.nu * t).exp();
        [
            x.cos() * y.sin() * f,
            -x.sin() * y.cos() * f,
            -0.25 * ((2.0 * x).cos() + (2.0 * y).cos()) * f * f,
        ]
    }

    /// Closed-form jets of `(u, v, p)`.
    pub fn jets(&self, x: f64, y: f64, t: f64) -> [Jet2; 3] {
        let (sx, cx) = x.sin_cos();
        let (sy, cy) = y.sin_cos();
        let (s2x, c2x) = (2.0 * x).sin_cos();
        let (s2y, c2y) = (2.0 * y).sin_cos();
        let a = 2.0 * self.nu;
        let u = separable_jet(
            cx * sy,
            [-sx * sy, cx * cy],
            [[-cx * sy, -sx * cy], [-sx * cy, -cx * sy]],
            a,
            t,
        );
        let v = separable_jet(
            -sx * cy,
            [-cx * cy, sx * sy],
            [[sx * cy, cx * sy], [cx * sy, sx * cy]],
            a,
            t,
        );
        let p = separable_jet(
            -0.25 * (c2x + c2y),
            [0.5 * s2x, 0.5 * s2y],
            [[c2x, 0.0], [0.0, c2y]],
            2.0 * a,
            t,
        );
        [u, v, p]
    }

    /// `½ ∫∫ (u² + v²) dx dy` over the periodic square, exact.
    pub fn kinetic_energy(&self, t: f64) -> f64 {
        // ∫∫ cos²x sin²y = π², same for the v term
        std::f64::consts::PI.powi(2) * (-4.0 * self.nu * t).exp()
    }
}
