//! Composite teacher/student loss and its exact parameter gradient.

use ndarray::Array2;

use super::{huber, huber_grad, LossBreakdown, LossWeights, Penalty};
use crate::error::{Error, Result};
use crate::jets::{loss_param_gradient, Jet2, JetField, JetInput, Order, ParamGradient};
use crate::net::MlpNetwork;
use crate::problems::{PdeProblem, Role};
use crate::sampling::SampleBatch;

/// Datasets of one iteration. Teacher targets, when present, are the frozen
/// teacher's outputs at the distillation points (`n x n_outputs`).
#[derive(Clone, Copy, Debug)]
pub struct LossInputs<'a> {
    pub collocation: &'a SampleBatch,
    pub constraints: &'a [SampleBatch],
    pub distillation: Option<(&'a SampleBatch, &'a Array2<f64>)>,
}

/// Penalty value and its derivative for one mismatch.
fn penalty(kind: Penalty, r: f64, delta: Option<f64>) -> (f64, f64) {
    match (kind, delta) {
        (Penalty::Huber, Some(d)) => (huber(r, d), huber_grad(r, d)),
        _ => (r * r, 2.0 * r),
    }
}

fn role_weight(w: &LossWeights, role: Role) -> Result<f64> {
    match role {
        Role::Boundary => Ok(w.w_bc),
        Role::Terminal => Ok(w.w_term),
        Role::Initial => Ok(w.w_ic),
        other => Err(Error::InvalidParameter(format!(
            "{other} batch passed as a constraint"
        ))),
    }
}

/// Weighted mean penalty of `net - target` over a value field, adding
/// `coef · d(mean)/d(output)` into `adjoint`.
#[allow(clippy::too_many_arguments)]
fn mismatch_term(
    field: &JetField,
    weights: &[f64],
    target: &dyn Fn(usize, usize) -> f64,
    kind: Penalty,
    delta: Option<f64>,
    scale: f64,
    coef: f64,
    adjoint: &mut Array2<f64>,
) -> f64 {
    let n = field.n;
    let n_out = field.n_outputs();
    let norm = 1.0 / (n * n_out) as f64;
    let mut acc = 0.0;
    for p in 0..n {
        for o in 0..n_out {
            let r = (field.value(o, p) - target(o, p)) * scale;
            let (v, g) = penalty(kind, r, delta);
            acc += weights[p] * v;
            if coef != 0.0 {
                adjoint[[o, p]] += coef * norm * weights[p] * g * scale;
            }
        }
    }
    acc * norm
}

/// Evaluates the composite loss and its parameter gradient.
///
/// Physics terms (residual, boundary, terminal/initial) are scaled by the
/// curriculum factor `c`; the distillation term always has full weight.
/// Residual terms are means over points and equations weighted by the
/// collocation weights; constraint terms use Huber when `huber_delta` is
/// set, squared error otherwise.
pub fn assemble_loss(
    net: &MlpNetwork,
    problem: &PdeProblem,
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
    c: f64,
) -> Result<(LossBreakdown, ParamGradient)> {
    problem.check_network(net)?;
    let mut jet_inputs = vec![JetInput {
        points: inputs.collocation.points.view(),
        order: Order::Second,
    }];
    for b in inputs.constraints {
        jet_inputs.push(JetInput {
            points: b.points.view(),
            order: Order::Value,
        });
    }
    if let Some((kd, targets)) = inputs.distillation {
        if targets.dim() != (kd.len(), problem.n_outputs()) {
            return Err(Error::Shape(format!(
                "teacher targets {:?} for {} distillation points",
                targets.dim(),
                kd.len()
            )));
        }
        jet_inputs.push(JetInput {
            points: kd.points.view(),
            order: Order::Value,
        });
    }

    let mut bd = LossBreakdown {
        curriculum: c,
        ..Default::default()
    };
    let (total, grad) = loss_param_gradient(net, &jet_inputs, |fields| {
        let mut adjoints: Vec<Array2<f64>> = fields
            .iter()
            .map(|f| Array2::zeros(f.data.raw_dim()))
            .collect();

        // residual term
        let field = &fields[0];
        let batch = inputs.collocation;
        let (n, n_eq, n_out, d) = (
            field.n,
            problem.n_equations(),
            problem.n_outputs(),
            problem.dim(),
        );
        let coef = c * weights.w_pde;
        let norm = 1.0 / (n * n_eq) as f64;
        let mut adj_field = JetField::zeros(field.layout, n_out, n);
        let mut jets = vec![Jet2::constant(0.0, d); n_out];
        let mut bars = vec![Jet2::constant(0.0, d); n_out];
        let mut r = vec![0.0; n_eq];
        let mut r_bar = vec![0.0; n_eq];
        let mut x = vec![0.0; d];
        let mut acc = 0.0;
        for p in 0..n {
            for (o, j) in jets.iter_mut().enumerate() {
                *j = field.jet(o, p);
            }
            for (k, xk) in x.iter_mut().enumerate() {
                *xk = batch.points[[p, k]];
            }
            problem.residuals(&x, &jets, &mut r);
            let w = batch.weights[p];
            acc += w * r.iter().map(|v| v * v).sum::<f64>();
            if coef != 0.0 {
                for (rb, rv) in r_bar.iter_mut().zip(&r) {
                    *rb = coef * norm * w * 2.0 * rv;
                }
                for b in bars.iter_mut() {
                    *b = Jet2::constant(0.0, d);
                }
                problem.residual_pullback(&x, &jets, &r_bar, &mut bars);
                for (o, b) in bars.iter().enumerate() {
                    adj_field.add_jet_adjoint(o, p, b);
                }
            }
        }
        bd.l_pde = acc * norm;
        adjoints[0] = adj_field.data;

        // constraint terms
        let mut target = vec![0.0; n_out];
        for (k, b) in inputs.constraints.iter().enumerate() {
            let mut targets = Array2::zeros((b.len(), n_out));
            for (p, row) in b.points.rows().into_iter().enumerate() {
                problem.constraint_target(b.role, &row.to_vec(), &mut target)?;
                targets
                    .row_mut(p)
                    .assign(&ndarray::ArrayView1::from(&target));
            }
            let w_role = role_weight(weights, b.role)?;
            let kind = if weights.huber_delta.is_some() {
                Penalty::Huber
            } else {
                Penalty::Mse
            };
            let l = mismatch_term(
                &fields[k + 1],
                &b.weights,
                &|o, p| targets[[p, o]],
                kind,
                weights.huber_delta,
                1.0,
                c * w_role,
                &mut adjoints[k + 1],
            );
            match b.role {
                Role::Boundary => bd.l_bc += l,
                Role::Terminal => bd.l_term += l,
                _ => bd.l_ic += l,
            }
        }

        // distillation term on (u_s - u_t) / tau
        if let Some((kd, targets)) = inputs.distillation {
            let k = fields.len() - 1;
            bd.l_kd = mismatch_term(
                &fields[k],
                &kd.weights,
                &|o, p| targets[[p, o]],
                weights.kd_penalty,
                weights.huber_delta,
                1.0 / weights.tau,
                weights.w_kd,
                &mut adjoints[k],
            );
        }
        let total = bd.weighted_total(weights);
        Ok((total, adjoints))
    })?;
    bd.total = total;
    bd.grad_norm = grad.norm();
    Ok((bd, grad))
}
