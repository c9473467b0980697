//! Experiment recipes and the end-to-end runs built on them: in-domain
//! Black–Scholes, the out-of-domain suite, the cross-PDE table and the
//! equal-architecture ablation.
//!
//! A recipe is a self-contained JSON document. Every results document
//! embeds the recipe, its seed and the sha256 of each checkpoint it wrote.

mod ablation;
mod cross_pde;
mod in_domain;
mod ood;
mod presets;

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{evaluate_against, AccuracyReport, EvalGrid};
use crate::net::checkpoint::{file_sha256, TrainingMeta};
use crate::net::{Checkpoint, LayerSpec, MlpNetwork};
use crate::perf::LatencyPlan;
use crate::problems::{PdeProblem, ProblemSpec};
use crate::training::{Penalty, TrainConfig, TrainOutcome};

pub use ablation::{run_equal_arch_ablation, AblationReport, AblationSeed};
pub use cross_pde::{run_cross_pde, CrossPdeReport, CrossPdeRow};
pub use in_domain::{
    probe_csv, run_in_domain_bs, InDomainReport, InDomainRun, ModelResult, TransferCheck,
};
pub use ood::{ood_comparison, run_ood_suite, OodComparison, OodReport, OodRow, Variant};
pub use presets::{
    ablation_recipe, bs_in_domain_recipe, bs_ood_recipe, bs_smoke_recipe, cross_pde_recipes,
    preset, presets, Scale,
};

pub const RECIPE_SCHEMA_VERSION: u32 = 1;

/// Student-side robustness options.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mitigations {
    /// Huber instead of squared error on the distillation term.
    pub huber_kd: bool,
    pub curriculum_fraction: Option<f64>,
    pub informed_eta: Option<f64>,
}

impl Mitigations {
    pub fn is_none(&self) -> bool {
        !self.huber_kd && self.curriculum_fraction.is_none() && self.informed_eta.is_none()
    }
}

/// A line through the domain: `axis` varies over its full range, the
/// remaining coordinates are fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub name: String,
    pub axis: usize,
    /// `(axis, value)` for every other coordinate.
    pub fixed: Vec<(usize, f64)>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    /// In-domain grid resolution per axis.
    pub resolution: Vec<usize>,
    /// Evaluate the out-of-domain regions (Black–Scholes only).
    pub ood: bool,
    pub slices: Vec<SliceSpec>,
    /// Stability constant used in the error-transfer bound.
    pub kappa: f64,
    /// Bins of the error-versus-distance table.
    pub distance_bins: usize,
}

impl Default for EvaluationPlan {
    fn default() -> Self {
        Self {
            resolution: vec![100, 50],
            ood: false,
            slices: Vec::new(),
            kappa: 1.0,
            distance_bins: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecipe {
    pub schema_version: u32,
    pub name: String,
    pub problem: ProblemSpec,
    pub teacher: LayerSpec,
    pub student: LayerSpec,
    pub teacher_train: TrainConfig,
    pub student_train: TrainConfig,
    pub mitigations: Mitigations,
    pub evaluation: EvaluationPlan,
    /// `None` skips latency measurement.
    pub latency: Option<LatencyPlan>,
    /// Single source of randomness; overrides the seeds inside the
    /// training configurations.
    pub seed: u64,
    /// Parent directory of the per-run results directories.
    pub output_dir: PathBuf,
}

impl ExperimentRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != RECIPE_SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "recipe schema_version {} (supported: {RECIPE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidParameter(format!(
                "recipe name {:?}",
                self.name
            )));
        }
        self.teacher.validate()?;
        self.student.validate()?;
        self.teacher_config().validate()?;
        self.student_config(Variant::KdPinnPlus).validate()?;
        let dim = match self.problem {
            ProblemSpec::NavierStokes { .. } => 3,
            _ => 2,
        };
        if self.evaluation.resolution.len() != dim
            || self.evaluation.resolution.iter().any(|&r| r < 2)
        {
            return Err(Error::InvalidParameter(format!(
                "evaluation resolution {:?} for a {dim}-d problem",
                self.evaluation.resolution
            )));
        }
        if let Some(eta) = self.mitigations.informed_eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::InvalidParameter(format!("informed eta {eta}")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let recipe: Self = serde_json::from_str(text)?;
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("recipe serializes")
    }

    /// sha256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("recipe serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn teacher_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            curriculum_fraction: None,
            informed_eta: None,
            ..self.teacher_train.clone()
        }
    }

    /// Student configuration with the mitigations applied for
    /// [`Variant::KdPinnPlus`] and stripped for the baseline.
    pub fn student_config(&self, variant: Variant) -> TrainConfig {
        let mut cfg = TrainConfig {
            seed: self.seed,
            ..self.student_train.clone()
        };
        match variant {
            Variant::Baseline => {
                cfg.curriculum_fraction = None;
                cfg.informed_eta = None;
                cfg.weights.kd_penalty = Penalty::Mse;
            }
            Variant::KdPinnPlus => {
                let m = &self.mitigations;
                cfg.curriculum_fraction = m.curriculum_fraction;
                cfg.informed_eta = m.informed_eta;
                if m.huber_kd {
                    cfg.weights.kd_penalty = Penalty::Huber;
                    cfg.weights.huber_delta.get_or_insert(1.0);
                }
            }
        }
        cfg
    }

    pub fn build_problem(&self) -> Result<PdeProblem> {
        self.problem.build()
    }

    pub fn eval_grid(&self, problem: &PdeProblem) -> Result<EvalGrid> {
        EvalGrid::new(problem.domain().clone(), self.evaluation.resolution.clone())
    }
}

/// Directory for one run, `<output_dir>/<recipe>-seed<seed>-<unix time>`,
/// suffixed when a directory of that name already exists.
pub fn create_results_dir(recipe: &ExperimentRecipe, label: &str) -> Result<PathBuf> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let base = format!("{}{label}-seed{}-{stamp}", recipe.name, recipe.seed);
    fs::create_dir_all(&recipe.output_dir).map_err(|e| Error::io(&recipe.output_dir, e))?;
    for k in 0.. {
        let name = if k == 0 {
            base.clone()
        } else {
            format!("{base}-{k}")
        };
        let dir = recipe.output_dir.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

pub(crate) fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub(crate) fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write_text(dir, name, &serde_json::to_string_pretty(value)?)
}

/// Saved checkpoint and its file hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub file: String,
    pub sha256: String,
}

/// Writes `outcome.network` to `dir/file` and returns the file hash.
pub fn save_checkpoint(
    dir: &Path,
    file: &str,
    recipe: &ExperimentRecipe,
    role: &str,
    outcome: &TrainOutcome,
    seed: u64,
) -> Result<CheckpointRef> {
    let meta = TrainingMeta {
        problem: recipe.problem.name().into(),
        role: role.into(),
        recipe: Some(recipe.name.clone()),
        iterations: outcome.history.len(),
        best_iteration: outcome.best_iteration,
        best_loss: outcome.best_loss,
        diverged: outcome.diverged.is_some(),
    };
    let path = dir.join(file);
    Checkpoint::from_network(&outcome.network, seed, meta).save(&path)?;
    Ok(CheckpointRef {
        file: file.into(),
        sha256: file_sha256(&path)?,
    })
}

/// Training summary carried into results documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub iterations: usize,
    pub best_iteration: Option<usize>,
    pub best_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub diverged: Option<String>,
}

impl TrainingSummary {
    pub fn of(outcome: &TrainOutcome) -> Self {
        Self {
            iterations: outcome.history.len(),
            best_iteration: outcome.best_iteration,
            best_loss: outcome.best_loss,
            final_loss: outcome.history.last().map(|b| b.total),
            diverged: outcome.diverged.clone(),
        }
    }
}

/// Accuracy of one network over all outputs of an evaluation set.
pub fn accuracy_on(
    problem: &PdeProblem,
    net: &MlpNetwork,
    grid: &EvalGrid,
) -> Result<AccuracyReport> {
    let reference = problem.reference_batch(grid.points().view())?;
    Ok(evaluate_against(problem, net, grid.points().view(), reference)?.accuracy)
}

/// Prediction and reference along a slice as CSV.
pub fn slice_csv(
    problem: &PdeProblem,
    nets: &[(&str, &MlpNetwork)],
    slice: &SliceSpec,
) -> Result<String> {
    let d = problem.dim();
    let dom = problem.domain();
    if slice.axis >= d || slice.points < 2 || slice.fixed.len() + 1 != d {
        return Err(Error::InvalidParameter(format!(
            "slice {slice:?} for a {d}-d problem"
        )));
    }
    let mut points = ndarray::Array2::zeros((slice.points, d));
    for p in 0..slice.points {
        let s = p as f64 / (slice.points - 1) as f64;
        points[[p, slice.axis]] = dom.lo[slice.axis] + s * dom.width(slice.axis);
        for &(axis, v) in &slice.fixed {
            points[[p, axis]] = v;
        }
    }
    let reference = problem.reference_batch(points.view())?;
    let preds = nets
        .iter()
        .map(|(_, n)| n.forward(points.view()))
        .collect::<Result<Vec<_>>>()?;
    let coords = problem.coordinate_names();
    let outs = problem.output_names();
    let mut header: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
    for o in outs {
        header.push(format!("{o}_ref"));
        for (label, _) in nets {
            header.push(format!("{o}_{label}"));
        }
    }
    let mut out = header.join(",") + "\n";
    for p in 0..slice.points {
        let mut row: Vec<String> = (0..d).map(|k| points[[p, k]].to_string()).collect();
        for o in 0..outs.len() {
            row.push(reference[[p, o]].to_string());
            for pred in &preds {
                row.push(pred[[p, o]].to_string());
            }
        }
        out += &row.join(",");
        out.push('\n');
    }
    Ok(out)
}

pub(crate) fn ns_slice() -> SliceSpec {
    SliceSpec {
        name: "y_half_pi_t_0.5".into(),
        axis: 0,
        fixed: vec![(1, PI / 2.0), (2, 0.5)],
        points: 201,
    }
}

pub(crate) fn time_slice(t: f64) -> SliceSpec {
    SliceSpec {
        name: format!("t_{t}"),
        axis: 0,
        fixed: vec![(1, t)],
        points: 201,
    }
}
