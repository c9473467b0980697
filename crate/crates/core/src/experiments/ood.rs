use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    save_checkpoint, write_json, write_text, CheckpointRef, ExperimentRecipe, TrainingSummary,
};
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, error_vs_distance, evaluate_against, AccuracyReport, DistanceBin, EvalGrid,
};
use crate::net::MlpNetwork;
use crate::problems::{DomainBox, ProblemSpec};
use crate::sampling::ood_regions;
use crate::training::{distill_student, history_csv, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    KdPinnPlus,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::KdPinnPlus => "kd_pinn_plus",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub region: String,
    pub teacher: AccuracyReport,
    pub student: AccuracyReport,
    /// Student over teacher RMSE.
    pub rmse_ratio: f64,
    /// Student over teacher rel-L²; `None` when either is undefined.
    pub rel_l2_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub recipe: ExperimentRecipe,
    pub recipe_hash: String,
    pub seed: u64,
    pub variant: Variant,
    pub student_training: TrainingSummary,
    pub student_checkpoint: Option<CheckpointRef>,
    pub rows: Vec<OodRow>,
    /// Pooled student RMSE over all regions divided by the pooled teacher
    /// RMSE.
    pub aggregate_ratio: f64,
    /// Student median |error| by L∞ distance to the training box over
    /// `[0, 5] x [0, 1]`.
    pub distance_bins: Vec<DistanceBin>,
}

const CDF_QUANTILES: usize = 101;

fn quantiles(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    (0..CDF_QUANTILES)
        .map(|k| {
            let pos = k as f64 / (CDF_QUANTILES - 1) as f64 * (v.len() - 1) as f64;
            v[pos.round() as usize]
        })
        .collect()
}

/// Trains one student variant against a fixed teacher and evaluates both
/// on every out-of-domain region. The student seed is the recipe seed.
pub fn run_ood_suite(
    recipe: &ExperimentRecipe,
    teacher: &MlpNetwork,
    variant: Variant,
    out: Option<&Path>,
) -> Result<(OodReport, TrainOutcome)> {
    recipe.validate()?;
    if !matches!(recipe.problem, ProblemSpec::BlackScholes { .. }) {
        return Err(Error::InvalidParameter(
            "out-of-domain regions are defined for black_scholes".into(),
        ));
    }
    let problem = recipe.build_problem()?;
    let student = distill_student(
        &problem,
        teacher,
        &recipe.student,
        &recipe.student_config(variant),
    )?;

    let mut rows = Vec::new();
    let mut cdf = String::from("region,model,quantile,abs_error\n");
    let (mut pooled_t, mut pooled_s, mut pooled_ref) = (Vec::new(), Vec::new(), Vec::new());
    for region in ood_regions() {
        let grid = region.grid();
        let reference = problem.reference_batch(grid.points().view())?;
        let et = evaluate_against(&problem, teacher, grid.points().view(), reference.clone())?;
        let es = evaluate_against(&problem, &student.network, grid.points().view(), reference)?;
        for (label, e) in [("teacher", &et), ("student", &es)] {
            let abs: Vec<f64> = e.errors().iter().map(|v| v.abs()).collect();
            for (k, q) in quantiles(abs).iter().enumerate() {
                writeln!(
                    cdf,
                    "{},{label},{},{q}",
                    region.name,
                    k as f64 / (CDF_QUANTILES - 1) as f64
                )
                .expect("write to string");
            }
        }
        pooled_t.extend(et.prediction.iter().copied());
        pooled_s.extend(es.prediction.iter().copied());
        pooled_ref.extend(et.reference.iter().copied());
        let rel_l2_ratio = match (et.accuracy.rel_l2, es.accuracy.rel_l2) {
            (Some(t), Some(s)) if t > 0.0 => Some(s / t),
            _ => None,
        };
        rows.push(OodRow {
            region: region.name.to_string(),
            rmse_ratio: es.accuracy.rmse / et.accuracy.rmse,
            rel_l2_ratio,
            teacher: et.accuracy,
            student: es.accuracy,
        });
    }
    let aggregate_ratio =
        accuracy(&pooled_s, &pooled_ref)?.rmse / accuracy(&pooled_t, &pooled_ref)?.rmse;

    let wide = EvalGrid::new(
        DomainBox::new(vec![0.0, 0.0], vec![5.0, 1.0], Some(1))?,
        vec![251, 51],
    )?;
    let pts = wide.points().view();
    let reference: Array2<f64> = problem.reference_batch(pts)?;
    let es = evaluate_against(&problem, &student.network, pts, reference)?;
    let abs: Vec<f64> = es.errors().iter().map(|v| v.abs()).collect();
    let distance_bins =
        error_vs_distance(pts, &abs, problem.domain(), recipe.evaluation.distance_bins)?;

    let student_checkpoint = match out {
        Some(dir) => Some(save_checkpoint(
            dir,
            &format!("student_{}.ckpt.json", variant.as_str()),
            recipe,
            "student",
            &student,
            recipe.seed,
        )?),
        None => None,
    };
    let report = OodReport {
        recipe: recipe.clone(),
        recipe_hash: recipe.hash(),
        seed: recipe.seed,
        variant,
        student_training: TrainingSummary::of(&student),
        student_checkpoint,
        rows,
        aggregate_ratio,
        distance_bins,
    };
    if let Some(dir) = out {
        let v = variant.as_str();
        write_json(dir, &format!("ood_{v}.json"), &report)?;
        write_text(dir, &format!("ood_{v}_cdf.csv"), &cdf)?;
        write_text(
            dir,
            &format!("ood_{v}_history.csv"),
            &history_csv(&student.history),
        )?;
        let mut bins = String::from("lo,hi,count,median_abs_error\n");
        for b in &report.distance_bins {
            let m = b
                .median_abs_error
                .map(|v| v.to_string())
                .unwrap_or_default();
            writeln!(bins, "{},{},{},{m}", b.lo, b.hi, b.count).expect("write to string");
        }
        write_text(dir, &format!("ood_{v}_error_vs_distance.csv"), &bins)?;
        let mut table = String::from(
            "region,rmse_teacher,rmse_student,rmse_ratio,rel_l2_teacher,rel_l2_student\n",
        );
        for r in &report.rows {
            let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                table,
                "{},{},{},{},{},{}",
                r.region,
                r.teacher.rmse,
                r.student.rmse,
                r.rmse_ratio,
                f(r.teacher.rel_l2),
                f(r.student.rel_l2)
            )
            .expect("write to string");
        }
        write_text(dir, &format!("ood_{v}_regions.csv"), &table)?;
    }
    Ok((report, student))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodComparison {
    /// `(region, baseline ratio, kd_pinn_plus ratio)`.
    pub regions: Vec<(String, f64, f64)>,
    /// Regions where the mitigated student has the lower ratio.
    pub improved: usize,
}

/// Region-by-region comparison of two variants trained against the same
/// teacher.
pub fn ood_comparison(baseline: &OodReport, plus: &OodReport) -> Result<OodComparison> {
    if baseline.rows.len() != plus.rows.len() {
        return Err(Error::Shape("reports cover different regions".into()));
    }
    let mut regions = Vec::new();
    let mut improved = 0;
    for (b, p) in baseline.rows.iter().zip(&plus.rows) {
        if b.region != p.region {
            return Err(Error::Shape(format!("region {} vs {}", b.region, p.region)));
        }
        if p.rmse_ratio < b.rmse_ratio {
            improved += 1;
        }
        regions.push((b.region.clone(), b.rmse_ratio, p.rmse_ratio));
    }
    Ok(OodComparison { regions, improved })
}
