use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    accuracy_on, save_checkpoint, slice_csv, write_json, write_text, CheckpointRef,
    ExperimentRecipe, Variant,
};
use crate::error::Result;
use crate::metrics::AccuracyReport;
use crate::perf::{measure_latency, speedup_ratio, LatencyReport};
use crate::training::{distill_student, history_csv, train_teacher, TrainOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossPdeRow {
    pub name: String,
    pub problem: String,
    pub recipe_hash: String,
    pub seed: u64,
    pub teacher: Option<AccuracyReport>,
    pub student: Option<AccuracyReport>,
    pub teacher_latency_ms: Option<f64>,
    pub student_latency_ms: Option<f64>,
    pub speedup: Option<f64>,
    pub teacher_checkpoint: Option<CheckpointRef>,
    pub student_checkpoint: Option<CheckpointRef>,
    pub teacher_diverged: Option<String>,
    pub student_diverged: Option<String>,
    /// Set when this row failed; the other rows are unaffected.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossPdeReport {
    pub recipes: Vec<ExperimentRecipe>,
    pub rows: Vec<CrossPdeRow>,
}

struct TrainedTeacher {
    outcome: TrainOutcome,
    latency: Option<LatencyReport>,
    checkpoint: Option<CheckpointRef>,
}

fn teacher_key(r: &ExperimentRecipe) -> String {
    serde_json::to_string(&(&r.problem, &r.teacher, &r.teacher_config(), &r.latency))
        .expect("serializable")
}

fn run_row(
    recipe: &ExperimentRecipe,
    teachers: &mut HashMap<String, TrainedTeacher>,
    out: Option<&Path>,
    row: &mut CrossPdeRow,
) -> Result<()> {
    recipe.validate()?;
    let problem = recipe.build_problem()?;
    let key = teacher_key(recipe);
    if !teachers.contains_key(&key) {
        let outcome = train_teacher(&problem, &recipe.teacher, &recipe.teacher_config())?;
        let latency = match &recipe.latency {
            Some(plan) => Some(measure_latency(&outcome.network, "teacher", plan)?),
            None => None,
        };
        let checkpoint = match out {
            Some(dir) => {
                let file = format!("{}_teacher.ckpt.json", recipe.name);
                write_text(
                    dir,
                    &format!("{}_teacher_history.csv", recipe.name),
                    &history_csv(&outcome.history),
                )?;
                Some(save_checkpoint(
                    dir,
                    &file,
                    recipe,
                    "teacher",
                    &outcome,
                    recipe.seed,
                )?)
            }
            None => None,
        };
        teachers.insert(
            key.clone(),
            TrainedTeacher {
                outcome,
                latency,
                checkpoint,
            },
        );
    }
    let teacher = &teachers[&key];
    row.teacher_diverged = teacher.outcome.diverged.clone();
    row.teacher_checkpoint = teacher.checkpoint.clone();
    let grid = recipe.eval_grid(&problem)?;
    row.teacher = Some(accuracy_on(&problem, &teacher.outcome.network, &grid)?);

    let student = distill_student(
        &problem,
        &teacher.outcome.network,
        &recipe.student,
        &recipe.student_config(Variant::KdPinnPlus),
    )?;
    row.student_diverged = student.diverged.clone();
    row.student = Some(accuracy_on(&problem, &student.network, &grid)?);
    if let (Some(plan), Some(lt)) = (&recipe.latency, &teacher.latency) {
        let ls = measure_latency(&student.network, "student", plan)?;
        row.teacher_latency_ms = Some(lt.median_ms);
        row.student_latency_ms = Some(ls.median_ms);
        row.speedup = Some(speedup_ratio(lt, &ls)?);
    }
    if let Some(dir) = out {
        row.student_checkpoint = Some(save_checkpoint(
            dir,
            &format!("{}_student.ckpt.json", recipe.name),
            recipe,
            "student",
            &student,
            recipe.seed,
        )?);
        write_text(
            dir,
            &format!("{}_student_history.csv", recipe.name),
            &history_csv(&student.history),
        )?;
        for slice in &recipe.evaluation.slices {
            let csv = slice_csv(
                &problem,
                &[
                    ("teacher", &teacher.outcome.network),
                    ("student", &student.network),
                ],
                slice,
            )?;
            write_text(
                dir,
                &format!("{}_slice_{}.csv", recipe.name, slice.name),
                &csv,
            )?;
        }
    }
    Ok(())
}

/// Runs every recipe, sharing teachers between rows whose problem, teacher
/// architecture and teacher training agree. A failing row records its
/// error and the suite continues.
pub fn run_cross_pde(recipes: &[ExperimentRecipe], out: Option<&Path>) -> Result<CrossPdeReport> {
    let mut teachers = HashMap::new();
    let mut rows = Vec::new();
    for recipe in recipes {
        let mut row = CrossPdeRow {
            name: recipe.name.clone(),
            problem: recipe.problem.name().into(),
            recipe_hash: recipe.hash(),
            seed: recipe.seed,
            teacher: None,
            student: None,
            teacher_latency_ms: None,
            student_latency_ms: None,
            speedup: None,
            teacher_checkpoint: None,
            student_checkpoint: None,
            teacher_diverged: None,
            student_diverged: None,
            error: None,
        };
        if let Err(e) = run_row(recipe, &mut teachers, out, &mut row) {
            row.error = Some(e.to_string());
        }
        rows.push(row);
    }
    let report = CrossPdeReport {
        recipes: recipes.to_vec(),
        rows,
    };
    if let Some(dir) = out {
        write_json(dir, "cross_pde.json", &report)?;
        let mut table = String::from(
            "name,rmse_teacher,rmse_student,latency_teacher_ms,latency_student_ms,speedup,error\n",
        );
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &report.rows {
            table += &format!(
                "{},{},{},{},{},{},{}\n",
                r.name,
                f(r.teacher.as_ref().map(|a| a.rmse)),
                f(r.student.as_ref().map(|a| a.rmse)),
                f(r.teacher_latency_ms),
                f(r.student_latency_ms),
                f(r.speedup),
                r.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        write_text(dir, "cross_pde.csv", &table)?;
    }
    Ok(report)
}
