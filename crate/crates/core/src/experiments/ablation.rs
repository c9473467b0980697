use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    accuracy_on, save_checkpoint, write_json, write_text, CheckpointRef, ExperimentRecipe, Variant,
};
use crate::error::{Error, Result};
use crate::metrics::AccuracyReport;
use crate::net::MlpNetwork;
use crate::perf::{measure_latencies, LatencyPlan};
use crate::training::{distill_student, history_csv, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSeed {
    pub seed: u64,
    pub distilled: AccuracyReport,
    pub plain: AccuracyReport,
    pub distilled_latency_ms: Option<f64>,
    pub plain_latency_ms: Option<f64>,
    /// `|t_distilled - t_plain| / t_plain`.
    pub latency_delta: Option<f64>,
    pub distilled_checkpoint: Option<CheckpointRef>,
    pub plain_checkpoint: Option<CheckpointRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub recipe: ExperimentRecipe,
    pub recipe_hash: String,
    pub mac_count: usize,
    pub seeds: Vec<AblationSeed>,
    /// Seeds where the distilled student has the lower RMSE.
    pub distilled_wins: usize,
    /// Median over seeds of `1 - rmse_distilled / rmse_plain`.
    pub median_rmse_improvement: f64,
}

/// Two students with the same architecture and seed, one distilled from
/// `teacher` and one trained on the physics loss alone (`w_kd = 0`), for
/// every seed in `seeds`.
pub fn run_equal_arch_ablation(
    recipe: &ExperimentRecipe,
    teacher: &MlpNetwork,
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<AblationReport> {
    recipe.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "ablation needs at least one seed".into(),
        ));
    }
    let problem = recipe.build_problem()?;
    let grid = recipe.eval_grid(&problem)?;
    let mut rows = Vec::new();
    for &seed in seeds {
        let mut r = recipe.clone();
        r.seed = seed;
        let distilled_cfg = r.student_config(Variant::Baseline);
        let plain_cfg = TrainConfig {
            weights: crate::training::LossWeights {
                w_kd: 0.0,
                ..distilled_cfg.weights
            },
            ..distilled_cfg.clone()
        };
        let distilled = distill_student(&problem, teacher, &r.student, &distilled_cfg)?;
        let plain = distill_student(&problem, teacher, &r.student, &plain_cfg)?;
        let (dl, pl) = match &r.latency {
            Some(plan) => {
                let plan = LatencyPlan { seed, ..*plan };
                let t = measure_latencies(
                    &[(&distilled.network, "distilled"), (&plain.network, "plain")],
                    &plan,
                )?;
                (Some(t[0].median_ms), Some(t[1].median_ms))
            }
            None => (None, None),
        };
        let (dc, pc) = match out {
            Some(dir) => {
                write_text(
                    dir,
                    &format!("distilled_seed{seed}_history.csv"),
                    &history_csv(&distilled.history),
                )?;
                write_text(
                    dir,
                    &format!("plain_seed{seed}_history.csv"),
                    &history_csv(&plain.history),
                )?;
                (
                    Some(save_checkpoint(
                        dir,
                        &format!("distilled_seed{seed}.ckpt.json"),
                        &r,
                        "student",
                        &distilled,
                        seed,
                    )?),
                    Some(save_checkpoint(
                        dir,
                        &format!("plain_seed{seed}.ckpt.json"),
                        &r,
                        "student",
                        &plain,
                        seed,
                    )?),
                )
            }
            None => (None, None),
        };
        rows.push(AblationSeed {
            seed,
            distilled: accuracy_on(&problem, &distilled.network, &grid)?,
            plain: accuracy_on(&problem, &plain.network, &grid)?,
            distilled_latency_ms: dl,
            plain_latency_ms: pl,
            latency_delta: dl.zip(pl).map(|(d, p)| (d - p).abs() / p),
            distilled_checkpoint: dc,
            plain_checkpoint: pc,
        });
    }
    let distilled_wins = rows
        .iter()
        .filter(|s| s.distilled.rmse <= s.plain.rmse)
        .count();
    let improvements: Vec<f64> = rows
        .iter()
        .map(|s| 1.0 - s.distilled.rmse / s.plain.rmse)
        .collect();
    let report = AblationReport {
        recipe: recipe.clone(),
        recipe_hash: recipe.hash(),
        mac_count: recipe.student.mac_count(),
        seeds: rows,
        distilled_wins,
        median_rmse_improvement: crate::perf::median(&improvements).expect("nonempty"),
    };
    if let Some(dir) = out {
        write_json(dir, "ablation.json", &report)?;
    }
    Ok(report)
}
