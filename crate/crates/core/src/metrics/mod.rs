//! Accuracy, calibration and out-of-domain metrics, and evaluation of the
//! distillation transfer bounds.

pub mod grid;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::MlpNetwork;
use crate::problems::{DomainBox, PdeProblem};

pub use grid::EvalGrid;

/// Reference norms below this leave the relative error undefined.
pub const ZERO_NORM: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub rmse: f64,
    /// `None` when the reference norm vanishes.
    pub rel_l2: Option<f64>,
    pub n_points: usize,
}

impl AccuracyReport {
    pub fn rel_l2_undefined(&self) -> bool {
        self.rel_l2.is_none()
    }
}

fn check_lengths(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < min {
        return Err(Error::Shape(format!(
            "need at least {min} values, got {}",
            a.len()
        )));
    }
    Ok(())
}

pub fn accuracy(pred: &[f64], reference: &[f64]) -> Result<AccuracyReport> {
    check_lengths(pred, reference, 1)?;
    let n = pred.len();
    let sq_err: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum();
    let ref_norm = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(AccuracyReport {
        rmse: (sq_err / n as f64).sqrt(),
        rel_l2: (ref_norm >= ZERO_NORM).then(|| sq_err.sqrt() / ref_norm),
        n_points: n,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson correlation; `None` if either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    check_lengths(a, b, 2)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Pearson correlation of the signed error fields.
    pub rho: Option<f64>,
    /// Squared correlation of the absolute error fields.
    pub r2: Option<f64>,
}

pub fn residual_correlation(
    teacher_errors: &[f64],
    student_errors: &[f64],
) -> Result<CorrelationReport> {
    check_lengths(teacher_errors, student_errors, 3)?;
    let rho = pearson(teacher_errors, student_errors)?;
    let abs_t: Vec<f64> = teacher_errors.iter().map(|e| e.abs()).collect();
    let abs_s: Vec<f64> = student_errors.iter().map(|e| e.abs()).collect();
    let r2 = pearson(&abs_t, &abs_s)?.map(|r| r * r);
    Ok(CorrelationReport { rho, r2 })
}

/// Coefficient of determination `1 - SS_res / SS_tot`; `None` for a
/// constant reference.
pub fn calibration_r2(pred: &[f64], reference: &[f64]) -> Result<Option<f64>> {
    check_lengths(pred, reference, 3)?;
    let m = mean(reference);
    let ss_tot: f64 = reference.iter().map(|r| (r - m) * (r - m)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

/// Largest coordinate overshoot outside the box; 0 on the closed box.
pub fn dist_linf_to_box(point: &[f64], domain: &DomainBox) -> f64 {
    point
        .iter()
        .zip(domain.lo.iter().zip(&domain.hi))
        .map(|(&x, (&lo, &hi))| (lo - x).max(x - hi).max(0.0))
        .fold(0.0, f64::max)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub median_abs_error: Option<f64>,
}

/// Median absolute error in equal-width bins of the L∞ distance to the
/// training box, covering `[0, max distance]`.
pub fn error_vs_distance(
    points: ArrayView2<'_, f64>,
    abs_errors: &[f64],
    train_box: &DomainBox,
    n_bins: usize,
) -> Result<Vec<DistanceBin>> {
    if points.nrows() == 0 || points.nrows() != abs_errors.len() || n_bins == 0 {
        return Err(Error::Shape(format!(
            "{} points, {} errors, {n_bins} bins",
            points.nrows(),
            abs_errors.len()
        )));
    }
    let dist: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|r| dist_linf_to_box(&r.to_vec(), train_box))
        .collect();
    let max = dist.iter().cloned().fold(0.0, f64::max);
    let width = max / n_bins as f64;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (d, e) in dist.iter().zip(abs_errors) {
        let b = if width > 0.0 {
            ((d / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        buckets[b].push(e.abs());
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(b, mut v)| DistanceBin {
            lo: width * b as f64,
            hi: if b + 1 == n_bins {
                max
            } else {
                width * (b + 1) as f64
            },
            count: v.len(),
            median_abs_error: median(&mut v),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferBoundInputs {
    /// Teacher L² error.
    pub eps_t: f64,
    /// Teacher residual L² norm.
    pub delta_t: f64,
    /// Student–teacher L² distance.
    pub eps_d: f64,
    /// Lipschitz constant of the residual operator.
    pub lipschitz: f64,
    /// Stability constant.
    pub kappa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferBounds {
    pub residual_bound: f64,
    pub error_bound: f64,
}

pub fn transfer_bounds(inputs: &TransferBoundInputs) -> Result<TransferBounds> {
    let TransferBoundInputs {
        eps_t,
        delta_t,
        eps_d,
        lipschitz,
        kappa,
    } = *inputs;
    if [eps_t, delta_t, eps_d, lipschitz, kappa]
        .iter()
        .any(|v| !(*v >= 0.0))
    {
        return Err(Error::InvalidParameter(format!(
            "bound inputs must be nonnegative: {inputs:?}"
        )));
    }
    let residual_bound = lipschitz * eps_d + delta_t;
    Ok(TransferBounds {
        residual_bound,
        error_bound: eps_t + kappa * residual_bound,
    })
}

/// Discrete L² norm with uniform node weight.
pub fn grid_l2_norm(values: &[f64], cell_weight: f64) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() * cell_weight).sqrt()
}

/// Output values and PDE residuals of one network on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Empirical Lipschitz surrogate of the residual operator: the largest
/// `‖N[u] - N[v]‖ / ‖u - v‖` over all snapshot pairs. `None` with fewer
/// than two distinct snapshots.
pub fn lipschitz_surrogate(snapshots: &[FieldSnapshot]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in snapshots.iter().enumerate() {
        for b in &snapshots[i + 1..] {
            let du: f64 = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            if du == 0.0 {
                continue;
            }
            let dr: f64 = a
                .residuals
                .iter()
                .zip(&b.residuals)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let ratio = (dr / du).sqrt();
            best = Some(best.map_or(ratio, |m: f64| m.max(ratio)));
        }
    }
    best
}

/// Subtracts the mean of column `column` over each group of rows sharing
/// the same time coordinate.
pub fn remove_gauge(
    points: ArrayView2<'_, f64>,
    time_axis: usize,
    values: &mut Array2<f64>,
    column: usize,
) {
    let mut groups: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for (row, v) in points.rows().into_iter().zip(values.column(column)) {
        let e = groups.entry(row[time_axis].to_bits()).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    for (row, v) in points.rows().into_iter().zip(values.column_mut(column)) {
        let (sum, count) = groups[&row[time_axis].to_bits()];
        *v -= sum / count as f64;
    }
}

/// Network and reference outputs on a grid, with the pressure gauge (if
/// any) removed from both.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub prediction: Array2<f64>,
    pub reference: Array2<f64>,
    pub accuracy: AccuracyReport,
}

impl Evaluation {
    /// Signed pointwise errors, outputs interleaved per point.
    pub fn errors(&self) -> Vec<f64> {
        self.prediction
            .iter()
            .zip(self.reference.iter())
            .map(|(p, r)| p - r)
            .collect()
    }
}

pub fn evaluate_on_points(
    problem: &PdeProblem,
    net: &MlpNetwork,
    points: ArrayView2<'_, f64>,
) -> Result<Evaluation> {
    let reference = problem.reference_batch(points)?;
    evaluate_against(problem, net, points, reference)
}

/// Like [`evaluate_on_points`] with precomputed reference outputs.
pub fn evaluate_against(
    problem: &PdeProblem,
    net: &MlpNetwork,
    points: ArrayView2<'_, f64>,
    mut reference: Array2<f64>,
) -> Result<Evaluation> {
    problem.check_network(net)?;
    let mut prediction = net.forward(points)?;
    if let (Some(col), Some(t)) = (problem.gauge_output(), problem.domain().time_axis) {
        remove_gauge(points, t, &mut prediction, col);
        remove_gauge(points, t, &mut reference, col);
    }
    let accuracy = accuracy(
        prediction.as_slice().expect("standard layout"),
        reference.as_slice().expect("standard layout"),
    )?;
    Ok(Evaluation {
        prediction,
        reference,
        accuracy,
    })
}

/// Per-point export: coordinates, then `pred`, `ref`, `error` per output.
pub fn error_field_csv(
    problem: &PdeProblem,
    points: ArrayView2<'_, f64>,
    eval: &Evaluation,
) -> String {
    let mut out = problem.coordinate_names().join(",");
    let outputs = problem.output_names();
    if outputs.len() == 1 {
        out.push_str(",pred,ref,error");
    } else {
        for o in outputs {
            write!(out, ",{o}_pred,{o}_ref,{o}_error").expect("write to string");
        }
    }
    out.push('\n');
    for (p, row) in points.rows().into_iter().enumerate() {
        let coords: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&coords.join(","));
        for o in 0..outputs.len() {
            let (a, b) = (eval.prediction[[p, o]], eval.reference[[p, o]]);
            write!(out, ",{a},{b},{}", a - b).expect("write to string");
        }
        out.push('\n');
    }
    out
}
