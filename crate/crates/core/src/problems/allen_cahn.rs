//! Allen–Cahn reference: `u_t = ν u_xx + u - u³` on [-1, 1] with zero
//! Dirichlet data for t > 0.
//!
//! Diffusion is Crank–Nicolson; the reaction term is extrapolated with
//! second-order Adams–Bashforth, the first step using a Heun
//! predictor–corrector so the scheme is second order from the start.

use std::f64::consts::PI;

use ndarray::Array2;

use super::check_positive;
use super::oracle::{OracleGrid, OracleMeta, ORACLE_FORMAT_VERSION};
use crate::error::{Error, Result};

pub fn initial(x: f64) -> f64 {
    x * x * (PI * x).cos()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AllenCahnSettings {
    /// Spatial intervals.
    pub nx: usize,
    /// Time steps to t = 1.
    pub nt: usize,
}

impl Default for AllenCahnSettings {
    fn default() -> Self {
        Self { nx: 512, nt: 2000 }
    }
}

#[derive(Clone, Debug)]
pub struct AllenCahnSolver {
    nu: f64,
    settings: AllenCahnSettings,
}

fn reaction(u: f64) -> f64 {
    u - u * u * u
}

/// Solves the constant-coefficient tridiagonal system
/// `off*y[j-1] + diag*y[j] + off*y[j+1] = rhs[j]` in place.
fn thomas(off: f64, diag: f64, rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    scratch[0] = off / diag;
    rhs[0] /= diag;
    for j in 1..n {
        let m = diag - off * scratch[j - 1];
        scratch[j] = off / m;
        rhs[j] = (rhs[j] - off * rhs[j - 1]) / m;
    }
    for j in (0..n - 1).rev() {
        rhs[j] -= scratch[j] * rhs[j + 1];
    }
}

impl AllenCahnSolver {
    pub fn new(nu: f64, settings: AllenCahnSettings) -> Result<Self> {
        check_positive("nu", nu)?;
        if settings.nx < 4 || settings.nt < 1 {
            return Err(Error::InvalidParameter(format!(
                "Allen-Cahn grid needs nx >= 4 and nt >= 1, got {settings:?}"
            )));
        }
        Ok(Self { nu, settings })
    }

    pub fn solve(&self) -> OracleGrid {
        let AllenCahnSettings { nx, nt } = self.settings;
        let h = 2.0 / nx as f64;
        let dt = 1.0 / nt as f64;
        let mu = self.nu * dt / (h * h);
        let m = nx - 1;

        let mut values = Array2::zeros((nt + 1, nx + 1));
        let x = |j: usize| -1.0 + j as f64 * h;
        for j in 0..=nx {
            values[[0, j]] = initial(x(j));
        }
        // interior unknowns; the boundary nodes are zero from t = 0+
        let mut u: Vec<f64> = (1..nx).map(|j| initial(x(j))).collect();
        let mut f_prev: Vec<f64> = u.iter().map(|&v| reaction(v)).collect();
        let mut rhs = vec![0.0; m];
        let mut scratch = vec![0.0; m];

        let explicit_diffusion = |u: &[f64], out: &mut [f64]| {
            for j in 0..m {
                let left = if j > 0 { u[j - 1] } else { 0.0 };
                let right = if j + 1 < m { u[j + 1] } else { 0.0 };
                out[j] = u[j] + 0.5 * mu * (left - 2.0 * u[j] + right);
            }
        };

        for n in 0..nt {
            let f_now: Vec<f64> = u.iter().map(|&v| reaction(v)).collect();
            explicit_diffusion(&u, &mut rhs);
            if n == 0 {
                let mut pred = rhs.clone();
                for j in 0..m {
                    pred[j] += dt * f_now[j];
                }
                thomas(-0.5 * mu, 1.0 + mu, &mut pred, &mut scratch);
                for j in 0..m {
                    rhs[j] += 0.5 * dt * (f_now[j] + reaction(pred[j]));
                }
            } else {
                for j in 0..m {
                    rhs[j] += dt * (1.5 * f_now[j] - 0.5 * f_prev[j]);
                }
            }
            thomas(-0.5 * mu, 1.0 + mu, &mut rhs, &mut scratch);
            std::mem::swap(&mut u, &mut rhs);
            f_prev = f_now;
            for j in 0..m {
                values[[n + 1, j + 1]] = u[j];
            }
        }

        OracleGrid {
            meta: OracleMeta {
                format_version: ORACLE_FORMAT_VERSION,
                problem: "allen_cahn".into(),
                nu: self.nu,
                grid_shape: [nx + 1, nt + 1],
                x_range: [-1.0, 1.0],
                t_range: [0.0, 1.0],
                solver: format!("crank-nicolson + adams-bashforth-2 reaction, nx={nx}, nt={nt}"),
                checksum: String::new(),
            },
            values,
        }
    }
}
