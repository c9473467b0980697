use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::batch::{JetField, Order};
use crate::error::{Error, Result};
use crate::net::MlpNetwork;

/// Gradient of a scalar loss with respect to every network parameter, in
/// the layout of [`MlpNetwork::params`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGradient {
    values: Vec<f64>,
    norm: f64,
}

impl ParamGradient {
    pub fn new(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|g| g * g).sum::<f64>().sqrt();
        Self { values, norm }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
            norm: 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Euclidean norm, cached at construction.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Cosine of the angle to another gradient; `None` if either is zero.
    pub fn cosine(&self, other: &ParamGradient) -> Option<f64> {
        if self.norm == 0.0 || other.norm == 0.0 || self.len() != other.len() {
            return None;
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Some(dot / (self.norm * other.norm))
    }
}

/// A batch of raw-coordinate points (`n x d_in`) and the jet order the loss
/// needs at those points.
#[derive(Clone, Copy, Debug)]
pub struct JetInput<'a> {
    pub points: ArrayView2<'a, f64>,
    pub order: Order,
}

/// Exact value and parameter gradient of a scalar loss built from network
/// jets.
///
/// The network is evaluated on every input batch. `loss` receives the
/// resulting output fields and returns the loss value together with its
/// adjoint with respect to each field (same shapes). The adjoints are then
/// pulled back through the jet-augmented forward pass.
pub fn loss_param_gradient<F>(
    net: &MlpNetwork,
    inputs: &[JetInput<'_>],
    loss: F,
) -> Result<(f64, ParamGradient)>
where
    F: FnOnce(&[JetField]) -> Result<(f64, Vec<Array2<f64>>)>,
{
    let tapes = inputs
        .iter()
        .map(|inp| net.forward_tape(inp.points, inp.order))
        .collect::<Result<Vec<_>>>()?;
    let fields: Vec<JetField> = tapes.iter().map(|t| t.output_field()).collect();
    let (value, adjoints) = loss(&fields)?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss value {value}")));
    }
    if adjoints.len() != tapes.len() {
        return Err(Error::Shape(format!(
            "loss returned {} adjoints for {} inputs",
            adjoints.len(),
            tapes.len()
        )));
    }
    let mut grad = vec![0.0; net.n_params()];
    for (tape, adj) in tapes.iter().zip(&adjoints) {
        net.backward(tape, adj, &mut grad)?;
    }
    Ok((value, ParamGradient::new(grad)))
}
