use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    save_checkpoint, write_json, write_text, CheckpointRef, ExperimentRecipe, TrainingSummary,
    Variant,
};
use crate::error::{Error, Result};
use crate::metrics::{
    calibration_r2, error_field_csv, evaluate_against, grid_l2_norm, lipschitz_surrogate,
    residual_correlation, transfer_bounds, AccuracyReport, CorrelationReport, EvalGrid,
    FieldSnapshot, TransferBoundInputs,
};
use crate::net::MlpNetwork;
use crate::perf::{measure_latencies, speedup_ratio, HardwareParams, LatencyReport, SpeedupBounds};
use crate::problems::{PdeProblem, ProblemSpec};
use crate::training::{distill_student, history_csv, train_teacher, LossBreakdown, TrainOutcome};

/// Residual and error transfer from teacher to student on the evaluation
/// grid, all norms by grid quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferCheck {
    pub eps_t: f64,
    pub delta_t: f64,
    pub eps_d: f64,
    /// Empirical surrogate over student snapshots; `None` without
    /// snapshots.
    pub lipschitz: Option<f64>,
    pub kappa: f64,
    pub residual_bound: Option<f64>,
    pub error_bound: Option<f64>,
    /// Measured student residual norm.
    pub student_residual: f64,
    /// Measured student L² error.
    pub student_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub training: TrainingSummary,
    pub accuracy: AccuracyReport,
    pub latency: Option<LatencyReport>,
    pub checkpoint: Option<CheckpointRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InDomainReport {
    pub recipe: ExperimentRecipe,
    pub recipe_hash: String,
    pub seed: u64,
    pub teacher: ModelResult,
    pub student: ModelResult,
    pub speedup: Option<f64>,
    pub bounds: SpeedupBounds,
    /// Distillation loss at the first iteration.
    pub kd_loss_first: Option<f64>,
    /// Distillation loss at iteration 500 (if reached).
    pub kd_loss_500: Option<f64>,
    pub correlation: CorrelationReport,
    pub student_calibration_r2: Option<f64>,
    pub transfer: TransferCheck,
}

/// Trained pair plus its report.
#[derive(Clone, Debug)]
pub struct InDomainRun {
    pub report: InDomainReport,
    pub teacher: TrainOutcome,
    pub student: TrainOutcome,
}

fn kd_at(history: &[LossBreakdown], iter: usize) -> Option<f64> {
    history.iter().find(|b| b.iter == iter).map(|b| b.l_kd)
}

fn snapshot(problem: &PdeProblem, net: &MlpNetwork, grid: &EvalGrid) -> Result<FieldSnapshot> {
    let values = net.forward(grid.points().view())?;
    let residuals = problem.network_residuals(net, grid.points().view())?;
    Ok(FieldSnapshot {
        values: values.iter().copied().collect(),
        residuals: residuals.iter().copied().collect(),
    })
}

pub(crate) fn transfer_check(
    problem: &PdeProblem,
    teacher: &MlpNetwork,
    student: &TrainOutcome,
    grid: &EvalGrid,
    kappa: f64,
) -> Result<TransferCheck> {
    let w = grid.cell_weight();
    let pts = grid.points().view();
    let reference = problem.reference_batch(pts)?;
    let ut = teacher.forward(pts)?;
    let us = student.network.forward(pts)?;
    let diff = |a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>| -> Vec<f64> {
        a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
    };
    let rt: Vec<f64> = problem
        .network_residuals(teacher, pts)?
        .iter()
        .copied()
        .collect();
    let rs: Vec<f64> = problem
        .network_residuals(&student.network, pts)?
        .iter()
        .copied()
        .collect();
    let eps_t = grid_l2_norm(&diff(&ut, &reference), w);
    let delta_t = grid_l2_norm(&rt, w);
    let eps_d = grid_l2_norm(&diff(&us, &ut), w);
    let mut snaps = student
        .snapshots
        .iter()
        .map(|(_, n)| snapshot(problem, n, grid))
        .collect::<Result<Vec<_>>>()?;
    if !snaps.is_empty() {
        snaps.push(snapshot(problem, &student.network, grid)?);
    }
    let lipschitz = lipschitz_surrogate(&snaps);
    let bounds = lipschitz
        .map(|l| {
            transfer_bounds(&TransferBoundInputs {
                eps_t,
                delta_t,
                eps_d,
                lipschitz: l,
                kappa,
            })
        })
        .transpose()?;
    Ok(TransferCheck {
        eps_t,
        delta_t,
        eps_d,
        lipschitz,
        kappa,
        residual_bound: bounds.map(|b| b.residual_bound),
        error_bound: bounds.map(|b| b.error_bound),
        student_residual: grid_l2_norm(&rs, w),
        student_error: grid_l2_norm(&diff(&us, &reference), w),
    })
}

/// Trains teacher and student from the recipe and evaluates both on the
/// in-domain grid. Artifacts are written to `out` when given.
pub fn run_in_domain_bs(recipe: &ExperimentRecipe, out: Option<&Path>) -> Result<InDomainRun> {
    recipe.validate()?;
    if !matches!(recipe.problem, ProblemSpec::BlackScholes { .. }) {
        return Err(Error::InvalidParameter(format!(
            "in-domain run expects black_scholes, recipe has {}",
            recipe.problem.name()
        )));
    }
    let problem = recipe.build_problem()?;
    let teacher = train_teacher(&problem, &recipe.teacher, &recipe.teacher_config())?;
    let student = distill_student(
        &problem,
        &teacher.network,
        &recipe.student,
        &recipe.student_config(Variant::KdPinnPlus),
    )?;
    let report = in_domain_report(recipe, &problem, &teacher, &student, out)?;
    Ok(InDomainRun {
        report,
        teacher,
        student,
    })
}

pub(crate) fn in_domain_report(
    recipe: &ExperimentRecipe,
    problem: &PdeProblem,
    teacher: &TrainOutcome,
    student: &TrainOutcome,
    out: Option<&Path>,
) -> Result<InDomainReport> {
    let grid = recipe.eval_grid(problem)?;
    let reference = problem.reference_batch(grid.points().view())?;
    let et = evaluate_against(
        problem,
        &teacher.network,
        grid.points().view(),
        reference.clone(),
    )?;
    let es = evaluate_against(problem, &student.network, grid.points().view(), reference)?;
    let (lt, ls) = match &recipe.latency {
        Some(plan) => {
            let mut t = measure_latencies(
                &[(&teacher.network, "teacher"), (&student.network, "student")],
                plan,
            )?;
            let s = t.pop();
            (t.pop(), s)
        }
        None => (None, None),
    };
    let speedup = match (&lt, &ls) {
        (Some(a), Some(b)) => Some(speedup_ratio(a, b)?),
        _ => None,
    };
    let (ct, cs) = match out {
        Some(dir) => (
            Some(save_checkpoint(
                dir,
                "teacher.ckpt.json",
                recipe,
                "teacher",
                teacher,
                recipe.seed,
            )?),
            Some(save_checkpoint(
                dir,
                "student.ckpt.json",
                recipe,
                "student",
                student,
                recipe.seed,
            )?),
        ),
        None => (None, None),
    };
    let errors_t = et.errors();
    let errors_s = es.errors();
    let report = InDomainReport {
        recipe: recipe.clone(),
        recipe_hash: recipe.hash(),
        seed: recipe.seed,
        teacher: ModelResult {
            training: TrainingSummary::of(teacher),
            accuracy: et.accuracy.clone(),
            latency: lt,
            checkpoint: ct,
        },
        student: ModelResult {
            training: TrainingSummary::of(student),
            accuracy: es.accuracy.clone(),
            latency: ls,
            checkpoint: cs,
        },
        speedup,
        bounds: SpeedupBounds::for_specs(
            &recipe.teacher,
            &recipe.student,
            &HardwareParams::default(),
        )?,
        kd_loss_first: kd_at(&student.history, 1),
        kd_loss_500: kd_at(&student.history, 500),
        correlation: residual_correlation(&errors_t, &errors_s)?,
        student_calibration_r2: calibration_r2(
            es.prediction.as_slice().expect("standard layout"),
            es.reference.as_slice().expect("standard layout"),
        )?,
        transfer: transfer_check(
            problem,
            &teacher.network,
            student,
            &grid,
            recipe.evaluation.kappa,
        )?,
    };
    if let Some(dir) = out {
        write_json(dir, "results.json", &report)?;
        write_text(dir, "recipe.json", &recipe.to_json())?;
        write_text(dir, "teacher_history.csv", &history_csv(&teacher.history))?;
        write_text(dir, "student_history.csv", &history_csv(&student.history))?;
        write_text(
            dir,
            "rmse_probe.csv",
            &probe_csv(&teacher.history, &student.history),
        )?;
        write_text(
            dir,
            "teacher_error_field.csv",
            &error_field_csv(problem, grid.points().view(), &et),
        )?;
        write_text(
            dir,
            "student_error_field.csv",
            &error_field_csv(problem, grid.points().view(), &es),
        )?;
        let mut pairs = String::from("teacher_error,student_error,reference,student_pred\n");
        for (k, (a, b)) in errors_t.iter().zip(&errors_s).enumerate() {
            writeln!(
                pairs,
                "{a},{b},{},{}",
                es.reference.as_slice().unwrap()[k],
                es.prediction.as_slice().unwrap()[k]
            )
            .expect("write to string");
        }
        write_text(dir, "error_pairs.csv", &pairs)?;
    }
    Ok(report)
}

/// RMSE probes of both stages, one row per probed iteration.
pub fn probe_csv(teacher: &[LossBreakdown], student: &[LossBreakdown]) -> String {
    let mut out = String::from("stage,iter,rmse\n");
    for (stage, h) in [("teacher", teacher), ("student", student)] {
        for b in h {
            if let Some(r) = b.rmse_probe {
                writeln!(out, "{stage},{},{r}", b.iter).expect("write to string");
            }
        }
    }
    out
}
