//! Column-block layout for jets over a batch of points.
//!
//! A layer state for `n` points is a matrix with one row per neuron and
//! `components * n` columns. Block 0 holds values, blocks `1..=d` the input
//! gradient, and the remaining blocks the upper triangle of the Hessian in
//! row-major pair order `(0,0), (0,1), .., (d-1,d-1)`. An affine layer is
//! then a single matrix product over all blocks, with the bias added to the
//! value block only.

use ndarray::Array2;

use super::{Activation, Jet2, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    /// Values only.
    Value,
    /// Values, gradients and Hessians.
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JetLayout {
    pub dim: usize,
    pub order: Order,
}

impl JetLayout {
    pub fn new(dim: usize, order: Order) -> Self {
        debug_assert!((1..=MAX_DIM).contains(&dim));
        Self { dim, order }
    }

    pub fn components(&self) -> usize {
        match self.order {
            Order::Value => 1,
            Order::Second => 1 + self.dim + self.dim * (self.dim + 1) / 2,
        }
    }

    pub fn grad_block(&self, i: usize) -> usize {
        debug_assert!(self.order == Order::Second && i < self.dim);
        1 + i
    }

    pub fn hess_block(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.order == Order::Second);
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // pairs before row i: d + (d-1) + ... + (d-i+1)
        let before = i * self.dim - i * (i.saturating_sub(1)) / 2;
        1 + self.dim + before + (j - i)
    }

    /// Stored Hessian pairs `(i, j)` with `i <= j`, in block order.
    pub fn hess_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        if self.order == Order::Second {
            for i in 0..self.dim {
                for j in i..self.dim {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }
}

/// Network outputs (or their adjoints) for a batch of points in the block
/// layout: `n_outputs x (components * n)`.
#[derive(Clone, Debug)]
pub struct JetField {
    pub layout: JetLayout,
    pub n: usize,
    pub data: Array2<f64>,
}

impl JetField {
    pub fn zeros(layout: JetLayout, n_outputs: usize, n: usize) -> Self {
        Self {
            layout,
            n,
            data: Array2::zeros((n_outputs, layout.components() * n)),
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn value(&self, output: usize, p: usize) -> f64 {
        self.data[[output, p]]
    }

    #[inline]
    pub fn grad(&self, output: usize, p: usize, i: usize) -> f64 {
        self.data[[output, self.layout.grad_block(i) * self.n + p]]
    }

    #[inline]
    pub fn hess(&self, output: usize, p: usize, i: usize, j: usize) -> f64 {
        self.data[[output, self.layout.hess_block(i, j) * self.n + p]]
    }

    /// Gathers one point's jet for one output.
    pub fn jet(&self, output: usize, p: usize) -> Jet2 {
        let d = self.layout.dim;
        let mut jet = Jet2::constant(self.value(output, p), d);
        if self.layout.order == Order::Second {
            for i in 0..d {
                jet.grad_mut()[i] = self.grad(output, p, i);
            }
            for i in 0..d {
                for j in i..d {
                    jet.set_hess(i, j, self.hess(output, p, i, j));
                }
            }
        }
        jet
    }

    /// Adds the adjoint of a jet (derivative of a scalar with respect to
    /// each jet entry) into this field. Off-diagonal Hessian entries are
    /// stored once, so both `(i,j)` and `(j,i)` adjoints fold into the same
    /// block.
    pub fn add_jet_adjoint(&mut self, output: usize, p: usize, adjoint: &Jet2) {
        let n = self.n;
        self.data[[output, p]] += adjoint.value();
        if self.layout.order == Order::Second {
            for i in 0..self.layout.dim {
                let b = self.layout.grad_block(i);
                self.data[[output, b * n + p]] += adjoint.grad()[i];
            }
            for i in 0..self.layout.dim {
                for j in i..self.layout.dim {
                    let b = self.layout.hess_block(i, j);
                    let a = if i == j {
                        adjoint.hess(i, i)
                    } else {
                        adjoint.hess(i, j) + adjoint.hess(j, i)
                    };
                    self.data[[output, b * n + p]] += a;
                }
            }
        }
    }

    /// Adjoint of the value entry only.
    #[inline]
    pub fn add_value_adjoint(&mut self, output: usize, p: usize, adjoint: f64) {
        self.data[[output, p]] += adjoint;
    }
}

/// Applies the activation to every neuron/point jet of a pre-activation
/// matrix.
pub fn activation_forward(
    kind: Activation,
    layout: JetLayout,
    n: usize,
    z: &Array2<f64>,
) -> Array2<f64> {
    let mut out = Array2::zeros(z.raw_dim());
    let d = layout.dim;
    let pairs = layout.hess_pairs();
    for (zr, mut yr) in z.rows().into_iter().zip(out.rows_mut()) {
        let zr = zr.as_slice().expect("standard layout");
        let yr = yr.as_slice_mut().expect("standard layout");
        match layout.order {
            Order::Value => {
                yr.copy_from_slice(zr);
                kind.apply_in_place(yr);
            }
            Order::Second => {
                for p in 0..n {
                    let [s0, s1, s2, _] = kind.derivatives(zr[p]);
                    yr[p] = s0;
                    let mut g = [0.0; MAX_DIM];
                    for (i, gi) in g.iter_mut().enumerate().take(d) {
                        *gi = zr[(1 + i) * n + p];
                        yr[(1 + i) * n + p] = s1 * *gi;
                    }
                    for (k, &(i, j)) in pairs.iter().enumerate() {
                        let idx = (1 + d + k) * n + p;
                        yr[idx] = s2 * g[i] * g[j] + s1 * zr[idx];
                    }
                }
            }
        }
    }
    out
}

/// Reverse of [`activation_forward`]: maps the adjoint of the activated
/// state back to the adjoint of the pre-activation state.
pub fn activation_backward(
    kind: Activation,
    layout: JetLayout,
    n: usize,
    z: &Array2<f64>,
    y_bar: &Array2<f64>,
) -> Array2<f64> {
    let mut z_bar = Array2::zeros(z.raw_dim());
    let d = layout.dim;
    let pairs = layout.hess_pairs();
    for ((zr, yb), mut zb) in z.rows().into_iter().zip(y_bar.rows()).zip(z_bar.rows_mut()) {
        let zr = zr.as_slice().expect("standard layout");
        let yb = yb.as_slice().expect("standard layout");
        let zb = zb.as_slice_mut().expect("standard layout");
        match layout.order {
            Order::Value => {
                for p in 0..n {
                    let [_, s1, _, _] = kind.derivatives(zr[p]);
                    zb[p] = s1 * yb[p];
                }
            }
            Order::Second => {
                for p in 0..n {
                    let [_, s1, s2, s3] = kind.derivatives(zr[p]);
                    let mut g = [0.0; MAX_DIM];
                    let mut gb = [0.0; MAX_DIM];
                    let mut v_bar = s1 * yb[p];
                    for i in 0..d {
                        g[i] = zr[(1 + i) * n + p];
                        let ybi = yb[(1 + i) * n + p];
                        v_bar += s2 * g[i] * ybi;
                        gb[i] = s1 * ybi;
                    }
                    for (k, &(i, j)) in pairs.iter().enumerate() {
                        let idx = (1 + d + k) * n + p;
                        let yh = yb[idx];
                        if yh == 0.0 {
                            continue;
                        }
                        v_bar += (s3 * g[i] * g[j] + s2 * zr[idx]) * yh;
                        if i == j {
                            gb[i] += 2.0 * s2 * g[i] * yh;
                        } else {
                            gb[i] += s2 * g[j] * yh;
                            gb[j] += s2 * g[i] * yh;
                        }
                        zb[idx] = s1 * yh;
                    }
                    zb[p] = v_bar;
                    for i in 0..d {
                        zb[(1 + i) * n + p] = gb[i];
                    }
                }
            }
        }
    }
    z_bar
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{jet_activation, seed_inputs};

    #[test]
    fn block_indices() {
        let l2 = JetLayout::new(2, Order::Second);
        assert_eq!(l2.components(), 6);
        assert_eq!(
            l2.hess_pairs()
                .iter()
                .map(|&(i, j)| l2.hess_block(i, j))
                .collect::<Vec<_>>(),
            vec![3, 4, 5]
        );
        let l3 = JetLayout::new(3, Order::Second);
        assert_eq!(l3.components(), 10);
        let blocks: Vec<_> = l3
            .hess_pairs()
            .iter()
            .map(|&(i, j)| l3.hess_block(i, j))
            .collect();
        assert_eq!(blocks, (4..10).collect::<Vec<_>>());
        assert_eq!(l3.hess_block(2, 0), l3.hess_block(0, 2));
        assert_eq!(JetLayout::new(3, Order::Value).components(), 1);
    }

    #[test]
    fn batched_activation_matches_scalar_path() {
        let layout = JetLayout::new(2, Order::Second);
        let n = 3;
        let pts = [[0.3, -0.2], [1.4, 0.9], [-2.0, 0.1]];
        let jets: Vec<_> = pts
            .iter()
            .map(|x| {
                let s = seed_inputs(x, 2).unwrap();
                s[0].mul_jet(s[1]) + 0.5 * s[0]
            })
            .collect();
        let mut field = JetField::zeros(layout, 1, n);
        for (p, j) in jets.iter().enumerate() {
            field.data[[0, p]] = j.value();
            for i in 0..2 {
                field.data[[0, (1 + i) * n + p]] = j.grad()[i];
            }
            for (i, k) in layout.hess_pairs() {
                field.data[[0, layout.hess_block(i, k) * n + p]] = j.hess(i, k);
            }
        }
        for kind in [Activation::Tanh, Activation::Silu] {
            let y = activation_forward(kind, layout, n, &field.data);
            let yf = JetField { layout, n, data: y };
            for (p, j) in jets.iter().enumerate() {
                assert_eq!(yf.jet(0, p), jet_activation(kind, *j));
            }
        }
    }
}
