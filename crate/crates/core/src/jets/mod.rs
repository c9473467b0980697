//! Second-order jets: a value together with its exact gradient and Hessian
//! with respect to the network inputs.
//!
//! Two representations live here. [`Jet2`] is a single scalar jet used for
//! point evaluation and PDE residuals. The batched layout in [`batch`] stores
//! the same components for many points as column blocks of a matrix so that
//! an affine layer becomes one matrix product.

pub mod batch;
pub mod fastmath;
pub mod grad;

use std::ops::{Add, Mul, Neg, Sub};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{JetField, JetLayout, Order};
pub use grad::{loss_param_gradient, JetInput, ParamGradient};

/// Largest supported input dimension.
pub const MAX_DIM: usize = 3;

/// Value, input gradient and input Hessian of a scalar quantity.
///
/// The Hessian is always kept symmetric: every write goes through
/// [`Jet2::set_hess`], which mirrors the entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    value: f64,
    grad: [f64; MAX_DIM],
    hess: [[f64; MAX_DIM]; MAX_DIM],
    dim: usize,
}

impl Jet2 {
    /// A jet with zero derivatives.
    pub fn constant(value: f64, dim: usize) -> Self {
        debug_assert!((1..=MAX_DIM).contains(&dim));
        Self {
            value,
            grad: [0.0; MAX_DIM],
            hess: [[0.0; MAX_DIM]; MAX_DIM],
            dim,
        }
    }

    /// Seed jet of input coordinate `index`: gradient `e_index`, Hessian 0.
    pub fn variable(value: f64, index: usize, dim: usize) -> Self {
        let mut jet = Self::constant(value, dim);
        jet.grad[index] = 1.0;
        jet
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn set_value(&mut self, value: f64) {
        self.value = value;
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad[..self.dim]
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad[..self.dim]
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[i][j]
    }

    pub fn set_hess(&mut self, i: usize, j: usize, value: f64) {
        self.hess[i][j] = value;
        self.hess[j][i] = value;
    }

    /// Adds `delta` to entry `(i, j)` and its mirror (once on the diagonal).
    pub fn add_hess(&mut self, i: usize, j: usize, delta: f64) {
        self.set_hess(i, j, self.hess[i][j] + delta);
    }

    /// Dense `dim x dim` copy of the Hessian.
    pub fn hess_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.dim, self.dim), |(i, j)| self.hess[i][j])
    }

    fn zip_with(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.dim, other.dim, "jet dimension mismatch");
        let mut out = Self::constant(f(self.value, other.value), self.dim);
        for i in 0..self.dim {
            out.grad[i] = f(self.grad[i], other.grad[i]);
            for j in 0..self.dim {
                out.hess[i][j] = f(self.hess[i][j], other.hess[i][j]);
            }
        }
        out
    }

    fn map_linear(self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self;
        out.value = f(self.value);
        for i in 0..self.dim {
            out.grad[i] = f(self.grad[i]);
            for j in 0..self.dim {
                out.hess[i][j] = f(self.hess[i][j]);
            }
        }
        out
    }

    /// Product rule to second order.
    pub fn mul_jet(self, other: Self) -> Self {
        assert_eq!(self.dim, other.dim, "jet dimension mismatch");
        let d = self.dim;
        let mut out = Self::constant(self.value * other.value, d);
        for i in 0..d {
            out.grad[i] = self.grad[i] * other.value + self.value * other.grad[i];
        }
        for i in 0..d {
            for j in i..d {
                let h = self.hess[i][j] * other.value
                    + self.grad[i] * other.grad[j]
                    + self.grad[j] * other.grad[i]
                    + self.value * other.hess[i][j];
                out.set_hess(i, j, h);
            }
        }
        out
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: f64) -> Jet2 {
        self.map_linear(|a| a * rhs)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        rhs * self
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.map_linear(|a| -a)
    }
}

/// Pointwise nonlinearity of a hidden layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Silu,
    Identity,
}

impl Activation {
    /// `[σ(z), σ'(z), σ''(z), σ'''(z)]`, all analytic.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = fastmath::tanh(z);
                let s1 = 1.0 - t * t;
                let s2 = -2.0 * t * s1;
                let s3 = s1 * (4.0 * t * t - 2.0 * s1);
                [t, s1, s2, s3]
            }
            Activation::Silu => {
                let sig = fastmath::logistic(z);
                let ds = sig * (1.0 - sig);
                let c = 1.0 - 2.0 * sig;
                let s0 = z * sig;
                let s1 = sig * (1.0 + z * (1.0 - sig));
                let s2 = ds * (2.0 + z * c);
                let s3 = ds * (3.0 * c + z * c * c - 2.0 * z * ds);
                [s0, s1, s2, s3]
            }
            Activation::Identity => [z, 1.0, 0.0, 0.0],
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => fastmath::tanh(z),
            Activation::Silu => z * fastmath::logistic(z),
            Activation::Identity => z,
        }
    }

    /// [`Self::apply`] over a slice; vectorizes.
    pub fn apply_in_place(self, zs: &mut [f64]) {
        match self {
            Activation::Tanh => fastmath::tanh_in_place(zs),
            Activation::Silu => fastmath::silu_in_place(zs),
            Activation::Identity => {}
        }
    }
}

/// Seed jets for an input point: jet `i` has value `x[i]`, gradient `e_i`
/// and zero Hessian.
pub fn seed_inputs(x: &[f64], dim: usize) -> Result<Vec<Jet2>> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::Dimension(dim));
    }
    if x.len() != dim {
        return Err(Error::Shape(format!(
            "seed point has {} coordinates, expected {dim}",
            x.len()
        )));
    }
    Ok(x.iter()
        .enumerate()
        .map(|(i, &xi)| Jet2::variable(xi, i, dim))
        .collect())
}

/// `W z + b` applied componentwise to jets. The bias only enters the value.
pub fn jet_affine(w: &Array2<f64>, b: &Array1<f64>, z: &[Jet2]) -> Result<Vec<Jet2>> {
    let (rows, cols) = w.dim();
    if cols != z.len() || rows != b.len() {
        return Err(Error::Shape(format!(
            "affine map {rows}x{cols} with bias {} applied to {} jets",
            b.len(),
            z.len()
        )));
    }
    let dim = match z.first() {
        Some(j) => j.dim,
        None => return Err(Error::Shape("affine map on empty jet vector".into())),
    };
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut acc = Jet2::constant(0.0, dim);
        for (c, zc) in z.iter().enumerate() {
            let wrc = w[[r, c]];
            acc.value += wrc * zc.value;
            for i in 0..dim {
                acc.grad[i] += wrc * zc.grad[i];
                for j in 0..dim {
                    acc.hess[i][j] += wrc * zc.hess[i][j];
                }
            }
        }
        acc.value += b[r];
        out.push(acc);
    }
    Ok(out)
}

/// Second-order chain rule through a scalar activation:
/// `grad = σ'·g`, `hess = σ''·g gᵀ + σ'·H`.
pub fn jet_activation(kind: Activation, z: Jet2) -> Jet2 {
    let [s0, s1, s2, _] = kind.derivatives(z.value);
    let d = z.dim;
    let mut out = Jet2::constant(s0, d);
    for i in 0..d {
        out.grad[i] = s1 * z.grad[i];
    }
    for i in 0..d {
        for j in i..d {
            out.set_hess(i, j, s2 * z.grad[i] * z.grad[j] + s1 * z.hess[i][j]);
        }
    }
    out
}
