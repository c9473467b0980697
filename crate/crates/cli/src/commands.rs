use std::fs;
use std::path::{Path, PathBuf};

use kdpinn::experiments::{
    accuracy_on, create_results_dir, ood_comparison, run_cross_pde, run_equal_arch_ablation,
    run_in_domain_bs, run_ood_suite, save_checkpoint, ExperimentRecipe, Variant,
};
use kdpinn::jets::Activation;
use kdpinn::metrics::{error_field_csv, evaluate_against, AccuracyReport};
use kdpinn::net::checkpoint::file_sha256;
use kdpinn::net::{Checkpoint, LayerSpec, MlpNetwork};
use kdpinn::perf::{
    check_single_thread, measure_latencies, speedup_ratio, HardwareParams, LatencyPlan,
    LatencyReport, SpeedupBounds,
};
use kdpinn::problems::{PdeProblem, ProblemSpec};
use kdpinn::sampling::ood_regions;
use kdpinn::training::{distill_student, history_csv, train_teacher, TrainOutcome};
use serde::Serialize;

use crate::config::CliConfig;
use crate::failure::Failure;

/// Progress messages on stderr; stdout carries results only.
#[derive(Clone, Copy, Debug)]
pub struct Log {
    pub level: u8,
}

impl Log {
    pub fn info(&self, msg: impl AsRef<str>) {
        if self.level >= 1 {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn debug(&self, msg: impl AsRef<str>) {
        if self.level >= 2 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    write(dir, name, &serde_json::to_string_pretty(value)?)
}

fn run_dir(cfg: &CliConfig, label: &str, log: Log) -> Result<PathBuf, Failure> {
    let dir = create_results_dir(&cfg.recipe, label)?;
    write(&dir, "recipe.json", &cfg.recipe.to_json())?;
    log.info(format!(
        "{} ({}) -> {}",
        cfg.recipe.name,
        cfg.source,
        dir.display()
    ));
    log.debug(cfg.recipe.to_json());
    Ok(dir)
}

/// Saves checkpoint and history. A diverged run keeps its last finite
/// parameters under `*.partial.*` names and fails with exit code 3.
fn finish_stage(
    dir: &Path,
    role: &str,
    recipe: &ExperimentRecipe,
    outcome: &TrainOutcome,
    log: Log,
) -> Result<PathBuf, Failure> {
    let partial = if outcome.diverged.is_some() {
        ".partial"
    } else {
        ""
    };
    write(
        dir,
        &format!("{role}_history{partial}.csv"),
        &history_csv(&outcome.history),
    )?;
    let file = format!("{role}{partial}.ckpt.json");
    let saved = save_checkpoint(dir, &file, recipe, role, outcome, recipe.seed)?;
    let path = dir.join(&saved.file);
    if let Some(why) = &outcome.diverged {
        return Err(Failure::diverged(format!(
            "{role} training diverged ({why}); partial artifacts in {}",
            dir.display()
        )));
    }
    if let Some(b) = outcome.history.last() {
        log.info(format!(
            "{role}: {} iterations, final loss {:.3e}",
            outcome.history.len(),
            b.total
        ));
    }
    Ok(path)
}

/// Loads a checkpoint and refuses it when it was trained on another problem.
fn load_for(path: &Path, problem: &PdeProblem) -> Result<(Checkpoint, MlpNetwork), Failure> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.training_meta.problem != problem.name() {
        return Err(Failure::config(format!(
            "{}: checkpoint was trained on {}, recipe problem is {}",
            path.display(),
            ckpt.training_meta.problem,
            problem.name()
        )));
    }
    let net = ckpt.network()?;
    if net.spec().input_dim() != problem.dim() || net.spec().output_dim() != problem.n_outputs() {
        return Err(Failure::config(format!(
            "{}: network sizes {:?} do not fit {}",
            path.display(),
            net.spec().sizes,
            problem.name()
        )));
    }
    Ok((ckpt, net))
}

fn teacher_for(
    cfg: &CliConfig,
    problem: &PdeProblem,
    checkpoint: Option<&Path>,
    dir: &Path,
    log: Log,
) -> Result<MlpNetwork, Failure> {
    match checkpoint {
        Some(path) => Ok(load_for(path, problem)?.1),
        None => {
            log.info("no teacher checkpoint given; training one");
            let outcome =
                train_teacher(problem, &cfg.recipe.teacher, &cfg.recipe.teacher_config())?;
            finish_stage(dir, "teacher", &cfg.recipe, &outcome, log)?;
            Ok(outcome.network)
        }
    }
}

pub fn train_teacher_cmd(cfg: &CliConfig, log: Log) -> Result<(), Failure> {
    let problem = cfg.recipe.build_problem()?;
    let dir = run_dir(cfg, "-teacher", log)?;
    let outcome = train_teacher(&problem, &cfg.recipe.teacher, &cfg.recipe.teacher_config())?;
    let path = finish_stage(&dir, "teacher", &cfg.recipe, &outcome, log)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct DistillInputs {
    teacher_checkpoint: String,
    teacher_sha256: String,
    variant: Variant,
}

pub fn distill_cmd(
    cfg: &CliConfig,
    teacher: &Path,
    variant: Variant,
    log: Log,
) -> Result<(), Failure> {
    let problem = cfg.recipe.build_problem()?;
    let (_, teacher_net) = load_for(teacher, &problem)?;
    let dir = run_dir(cfg, "-student", log)?;
    write_json(
        &dir,
        "inputs.json",
        &DistillInputs {
            teacher_checkpoint: teacher.display().to_string(),
            teacher_sha256: file_sha256(teacher)?,
            variant,
        },
    )?;
    let outcome = distill_student(
        &problem,
        &teacher_net,
        &cfg.recipe.student,
        &cfg.recipe.student_config(variant),
    )?;
    let path = finish_stage(&dir, "student", &cfg.recipe, &outcome, log)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluationDoc {
    recipe_hash: String,
    problem: String,
    role: String,
    checkpoint_sha256: String,
    spec: LayerSpec,
    in_domain: AccuracyReport,
    /// Out-of-domain regions, when the recipe asks for them.
    regions: Vec<(String, AccuracyReport)>,
}

pub fn evaluate_cmd(cfg: &CliConfig, checkpoint: &Path, log: Log) -> Result<(), Failure> {
    let problem = cfg.recipe.build_problem()?;
    let (ckpt, net) = load_for(checkpoint, &problem)?;
    let grid = cfg.recipe.eval_grid(&problem)?;
    let pts = grid.points().view();
    let eval = evaluate_against(&problem, &net, pts, problem.reference_batch(pts)?)?;
    let mut regions = Vec::new();
    if cfg.recipe.evaluation.ood && matches!(cfg.recipe.problem, ProblemSpec::BlackScholes { .. }) {
        for region in ood_regions() {
            regions.push((
                region.name.to_string(),
                accuracy_on(&problem, &net, &region.grid())?,
            ));
        }
    }
    let doc = EvaluationDoc {
        recipe_hash: cfg.recipe.hash(),
        problem: problem.name().into(),
        role: ckpt.training_meta.role.clone(),
        checkpoint_sha256: file_sha256(checkpoint)?,
        spec: ckpt.spec.clone(),
        in_domain: eval.accuracy.clone(),
        regions,
    };
    let dir = run_dir(cfg, "-evaluate", log)?;
    write(
        &dir,
        "error_field.csv",
        &error_field_csv(&problem, pts, &eval),
    )?;
    let path = write_json(&dir, "evaluation.json", &doc)?;
    log.info(format!(
        "rmse {:.4e}, rel_l2 {}",
        doc.in_domain.rmse,
        doc.in_domain
            .rel_l2
            .map_or("undefined".into(), |v| format!("{v:.4e}"))
    ));
    println!("{}", path.display());
    Ok(())
}

pub fn in_domain_cmd(cfg: &CliConfig, log: Log) -> Result<(), Failure> {
    let dir = run_dir(cfg, "", log)?;
    let run = run_in_domain_bs(&cfg.recipe, Some(&dir))?;
    let r = &run.report;
    log.info(format!(
        "teacher rmse {:.4e}, student rmse {:.4e}, speedup {}",
        r.teacher.accuracy.rmse,
        r.student.accuracy.rmse,
        r.speedup.map_or("n/a".into(), |s| format!("{s:.2}"))
    ));
    for (role, m) in [("teacher", &r.teacher), ("student", &r.student)] {
        if let Some(why) = &m.training.diverged {
            return Err(Failure::diverged(format!(
                "{role} diverged ({why}); results in {}",
                dir.display()
            )));
        }
    }
    println!("{}", dir.join("results.json").display());
    Ok(())
}

#[derive(Serialize)]
struct OodSeedSummary {
    seed: u64,
    improved_regions: usize,
    baseline_aggregate_ratio: f64,
    kd_pinn_plus_aggregate_ratio: f64,
    regions: Vec<(String, f64, f64)>,
}

#[derive(Serialize)]
struct OodSummary {
    recipe_hash: String,
    seeds: Vec<OodSeedSummary>,
    /// Seeds where the mitigated student improves at least 3 regions.
    seeds_improving_majority: usize,
}

pub fn ood_cmd(
    cfg: &CliConfig,
    teacher: Option<&Path>,
    seeds: &[u64],
    log: Log,
) -> Result<(), Failure> {
    let problem = cfg.recipe.build_problem()?;
    let dir = run_dir(cfg, "-ood", log)?;
    let teacher = teacher_for(cfg, &problem, teacher, &dir, log)?;
    let seeds = if seeds.is_empty() {
        vec![cfg.recipe.seed]
    } else {
        seeds.to_vec()
    };
    let mut rows = Vec::new();
    let mut diverged = None;
    for &seed in &seeds {
        let sub = dir.join(format!("seed{seed}"));
        fs::create_dir_all(&sub)?;
        let recipe = ExperimentRecipe {
            seed,
            ..cfg.recipe.clone()
        };
        let (b, _) = run_ood_suite(&recipe, &teacher, Variant::Baseline, Some(&sub))?;
        let (p, _) = run_ood_suite(&recipe, &teacher, Variant::KdPinnPlus, Some(&sub))?;
        for r in [&b, &p] {
            if let Some(why) = &r.student_training.diverged {
                diverged.get_or_insert(format!("seed {seed} {}: {why}", r.variant.as_str()));
            }
        }
        let cmp = ood_comparison(&b, &p)?;
        write_json(&sub, "comparison.json", &cmp)?;
        log.info(format!(
            "seed {seed}: kd_pinn_plus improves {}/{} regions",
            cmp.improved,
            cmp.regions.len()
        ));
        rows.push(OodSeedSummary {
            seed,
            improved_regions: cmp.improved,
            baseline_aggregate_ratio: b.aggregate_ratio,
            kd_pinn_plus_aggregate_ratio: p.aggregate_ratio,
            regions: cmp.regions,
        });
    }
    let summary = OodSummary {
        recipe_hash: cfg.recipe.hash(),
        seeds_improving_majority: rows.iter().filter(|r| r.improved_regions >= 3).count(),
        seeds: rows,
    };
    let path = write_json(&dir, "ood_summary.json", &summary)?;
    if let Some(why) = diverged {
        return Err(Failure::diverged(format!(
            "student diverged ({why}); results in {}",
            dir.display()
        )));
    }
    println!("{}", path.display());
    Ok(())
}

pub fn ablation_cmd(
    cfg: &CliConfig,
    teacher: Option<&Path>,
    seeds: &[u64],
    log: Log,
) -> Result<(), Failure> {
    let problem = cfg.recipe.build_problem()?;
    let dir = run_dir(cfg, "-ablation", log)?;
    let teacher = teacher_for(cfg, &problem, teacher, &dir, log)?;
    let seeds = if seeds.is_empty() {
        vec![cfg.recipe.seed]
    } else {
        seeds.to_vec()
    };
    let report = run_equal_arch_ablation(&cfg.recipe, &teacher, &seeds, Some(&dir))?;
    log.info(format!(
        "distilled wins {}/{} seeds, median rmse improvement {:.1}%",
        report.distilled_wins,
        report.seeds.len(),
        100.0 * report.median_rmse_improvement
    ));
    println!("{}", dir.join("ablation.json").display());
    Ok(())
}

pub fn cross_pde_cmd(recipes: &[ExperimentRecipe], log: Log) -> Result<(), Failure> {
    let first = recipes
        .first()
        .ok_or_else(|| Failure::config("no cross-PDE recipes selected"))?;
    let label = ExperimentRecipe {
        name: "cross_pde".into(),
        ..first.clone()
    };
    let dir = create_results_dir(&label, "")?;
    log.info(format!("{} recipes -> {}", recipes.len(), dir.display()));
    let report = run_cross_pde(recipes, Some(&dir))?;
    let mut failed = 0;
    for row in &report.rows {
        let problem = row
            .error
            .as_ref()
            .map(|e| format!("failed: {e}"))
            .or_else(|| {
                row.teacher_diverged
                    .as_ref()
                    .map(|d| format!("teacher diverged: {d}"))
            })
            .or_else(|| {
                row.student_diverged
                    .as_ref()
                    .map(|d| format!("student diverged: {d}"))
            });
        match problem {
            Some(msg) => {
                failed += 1;
                log.info(format!("{}: {msg}", row.name));
            }
            None => log.info(format!(
                "{}: rmse teacher {} student {}, speedup {}",
                row.name,
                row.teacher
                    .as_ref()
                    .map_or("-".into(), |a| format!("{:.3e}", a.rmse)),
                row.student
                    .as_ref()
                    .map_or("-".into(), |a| format!("{:.3e}", a.rmse)),
                row.speedup.map_or("-".into(), |s| format!("{s:.2}"))
            )),
        }
    }
    println!("{}", dir.join("cross_pde.json").display());
    if failed > 0 {
        return Err(Failure::diverged(format!(
            "{failed} of {} rows failed or diverged",
            report.rows.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
pub struct BenchDoc {
    pub teacher: LatencyReport,
    pub student: LatencyReport,
    pub speedup: f64,
    pub bounds: SpeedupBounds,
}

pub enum BenchModels<'a> {
    Checkpoints {
        teacher: &'a Path,
        student: &'a Path,
    },
    /// Freshly initialized networks with the recipe's architectures;
    /// latency does not depend on the weights.
    Recipe(&'a CliConfig),
}

pub fn bench_cmd(
    models: BenchModels<'_>,
    plan: LatencyPlan,
    hw: &HardwareParams,
    out: Option<&Path>,
    log: Log,
) -> Result<(), Failure> {
    check_single_thread()?;
    let (teacher, student) = match models {
        BenchModels::Checkpoints { teacher, student } => {
            let t = Checkpoint::load(teacher)?.network()?;
            let s = Checkpoint::load(student)?.network()?;
            (t, s)
        }
        BenchModels::Recipe(cfg) => {
            let problem = cfg.recipe.build_problem()?;
            let scale = problem.domain().input_scale();
            (
                MlpNetwork::init_xavier(
                    cfg.recipe.teacher.clone(),
                    scale.clone(),
                    cfg.recipe.seed,
                )?,
                MlpNetwork::init_xavier(cfg.recipe.student.clone(), scale, cfg.recipe.seed ^ 1)?,
            )
        }
    };
    log.info(format!(
        "timing {:?} vs {:?}: batch {}, {} warmup, {} runs",
        teacher.spec().sizes,
        student.spec().sizes,
        plan.batch,
        plan.warmup,
        plan.runs
    ));
    let mut times = measure_latencies(&[(&teacher, "teacher"), (&student, "student")], &plan)?;
    let s = times.pop().expect("two reports");
    let t = times.pop().expect("two reports");
    let doc = BenchDoc {
        speedup: speedup_ratio(&t, &s)?,
        bounds: SpeedupBounds::for_specs(teacher.spec(), student.spec(), hw)?,
        teacher: t,
        student: s,
    };
    let text = serde_json::to_string_pretty(&doc)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write(dir, "bench.json", &text)?;
    }
    println!("{text}");
    Ok(())
}

/// Parses `2,50,50,50,1` into a tanh layer spec.
pub fn parse_sizes(text: &str, activation: Activation) -> Result<LayerSpec, Failure> {
    let sizes = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::config(format!("layer sizes {text:?}: {e}")))?;
    Ok(LayerSpec::new(sizes, activation)?)
}

pub fn bounds_cmd(r_flops: f64, hw: &HardwareParams) -> Result<(), Failure> {
    let b = SpeedupBounds::from_ratio(r_flops, hw)?;
    println!("{}", serde_json::to_string_pretty(&b)?);
    Ok(())
}
