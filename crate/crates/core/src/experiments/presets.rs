use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{
    ns_slice, time_slice, EvaluationPlan, ExperimentRecipe, Mitigations, RECIPE_SCHEMA_VERSION,
};
use crate::jets::Activation;
use crate::net::LayerSpec;
use crate::perf::LatencyPlan;
use crate::problems::ProblemSpec;
use crate::training::{BatchSizes, LossWeights, TrainConfig};

/// Desk presets finish in minutes on one core; full presets follow the
/// published protocol and take hours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Full,
}

fn config(iterations: usize, fine_tune: usize, batches: BatchSizes) -> TrainConfig {
    TrainConfig {
        iterations,
        fine_tune_iterations: fine_tune,
        batches,
        ..TrainConfig::default()
    }
}

fn desk_batches(collocation: usize) -> BatchSizes {
    BatchSizes {
        collocation,
        boundary: 256,
        terminal: 512,
        distillation: collocation,
    }
}

fn bs_teacher_config(scale: Scale) -> TrainConfig {
    match scale {
        Scale::Desk => config(1500, 300, desk_batches(2048)),
        Scale::Full => config(8000, 300, BatchSizes::default()),
    }
}

fn kd_pinn_plus() -> Mitigations {
    Mitigations {
        huber_kd: true,
        curriculum_fraction: Some(0.2),
        informed_eta: Some(0.75),
    }
}

fn bs_base(name: &str, scale: Scale) -> ExperimentRecipe {
    let student_train = match scale {
        Scale::Desk => config(1200, 300, desk_batches(2048)),
        Scale::Full => config(6000, 300, BatchSizes::default()),
    };
    ExperimentRecipe {
        schema_version: RECIPE_SCHEMA_VERSION,
        name: name.into(),
        problem: ProblemSpec::black_scholes_default(),
        teacher: LayerSpec::tanh(&[2, 50, 50, 50, 1]),
        student: LayerSpec::tanh(&[2, 20, 20, 20, 1]),
        teacher_train: bs_teacher_config(scale),
        student_train,
        mitigations: Mitigations::default(),
        evaluation: EvaluationPlan::default(),
        latency: Some(LatencyPlan::default()),
        seed: 0,
        output_dir: PathBuf::from("results"),
    }
}

/// In-domain Black–Scholes teacher/student comparison.
pub fn bs_in_domain_recipe(scale: Scale) -> ExperimentRecipe {
    let mut r = bs_base(&format!("bs_in_domain_{}", scale_tag(scale)), scale);
    r.student_train.snapshot_every = r.student_train.total_iterations() / 10;
    r
}

/// Out-of-domain suite; the mitigations apply to the `kd_pinn_plus` variant.
pub fn bs_ood_recipe(scale: Scale) -> ExperimentRecipe {
    let mut r = bs_base(&format!("bs_ood_{}", scale_tag(scale)), scale);
    r.mitigations = kd_pinn_plus();
    r.evaluation.ood = true;
    r.latency = None;
    r
}

/// Two students with the teacher's architecture, with and without
/// distillation.
pub fn ablation_recipe(scale: Scale) -> ExperimentRecipe {
    let mut r = bs_base(&format!("bs_ablation_{}", scale_tag(scale)), scale);
    r.student = r.teacher.clone();
    if scale == Scale::Desk {
        r.student_train = config(600, 100, desk_batches(1024));
    }
    r
}

fn cross_recipe(
    name: &str,
    problem: ProblemSpec,
    student: LayerSpec,
    tau: f64,
    scale: Scale,
    slice: super::SliceSpec,
) -> ExperimentRecipe {
    let (d, out, resolution) = match problem {
        ProblemSpec::NavierStokes { .. } => (3, 3, vec![40, 40, 11]),
        _ => (2, 1, vec![100, 50]),
    };
    let teacher = LayerSpec::tanh(&[d, 64, 64, 64, 64, out]);
    let student = LayerSpec {
        sizes: {
            let mut s = student.sizes;
            s[0] = d;
            *s.last_mut().expect("nonempty") = out;
            s
        },
        ..student
    };
    let (teacher_train, mut student_train) = match scale {
        Scale::Desk => {
            let b = BatchSizes {
                collocation: 1024,
                boundary: 128,
                terminal: 256,
                distillation: 1024,
            };
            (config(600, 100, b), config(500, 100, b))
        }
        Scale::Full => (
            config(8000, 300, BatchSizes::default()),
            config(6000, 300, BatchSizes::default()),
        ),
    };
    student_train.weights = LossWeights {
        tau,
        ..student_train.weights
    };
    ExperimentRecipe {
        schema_version: RECIPE_SCHEMA_VERSION,
        name: format!("{name}_{}", scale_tag(scale)),
        problem,
        teacher,
        student,
        teacher_train,
        student_train,
        mitigations: Mitigations::default(),
        evaluation: EvaluationPlan {
            resolution,
            slices: vec![slice],
            ..EvaluationPlan::default()
        },
        latency: Some(LatencyPlan::default()),
        seed: 0,
        output_dir: PathBuf::from("results"),
    }
}

/// Burgers, Allen–Cahn, Navier–Stokes with a tanh student and
/// Navier–Stokes with the latency-optimized SiLU student.
pub fn cross_pde_recipes(scale: Scale) -> Vec<ExperimentRecipe> {
    let student = LayerSpec::tanh(&[2, 20, 20, 20, 1]);
    let fast = LayerSpec {
        sizes: vec![3, 32, 32, 32, 3],
        activation: Activation::Silu,
    };
    vec![
        cross_recipe(
            "burgers",
            ProblemSpec::burgers_default(),
            student.clone(),
            1.25,
            scale,
            time_slice(0.25),
        ),
        cross_recipe(
            "allen_cahn",
            ProblemSpec::allen_cahn_default(),
            student.clone(),
            1.25,
            scale,
            time_slice(0.25),
        ),
        cross_recipe(
            "navier_stokes",
            ProblemSpec::navier_stokes_default(),
            student,
            1.25,
            scale,
            ns_slice(),
        ),
        cross_recipe(
            "navier_stokes_fast",
            ProblemSpec::navier_stokes_default(),
            fast,
            2.0,
            scale,
            ns_slice(),
        ),
    ]
}

fn scale_tag(scale: Scale) -> &'static str {
    match scale {
        Scale::Desk => "desk",
        Scale::Full => "full",
    }
}

/// Small Black–Scholes pair that trains in seconds; meant for plumbing
/// checks, not accuracy.
pub fn bs_smoke_recipe() -> ExperimentRecipe {
    let mut r = bs_base("bs_smoke", Scale::Desk);
    r.teacher = LayerSpec::tanh(&[2, 16, 16, 1]);
    r.student = LayerSpec::tanh(&[2, 8, 8, 1]);
    let b = BatchSizes {
        collocation: 256,
        boundary: 64,
        terminal: 64,
        distillation: 256,
    };
    r.teacher_train = config(200, 20, b);
    r.student_train = config(150, 20, b);
    r.evaluation.resolution = vec![41, 21];
    r.latency = Some(LatencyPlan {
        batch: 2000,
        warmup: 2,
        runs: 5,
        seed: 0,
    });
    r
}

/// Every named preset, in a stable order.
pub fn presets() -> Vec<ExperimentRecipe> {
    let mut all = vec![bs_smoke_recipe()];
    for scale in [Scale::Desk, Scale::Full] {
        all.push(bs_in_domain_recipe(scale));
        all.push(bs_ood_recipe(scale));
        all.push(ablation_recipe(scale));
        all.extend(cross_pde_recipes(scale));
    }
    all
}

/// Preset by recipe name, e.g. `bs_in_domain_desk`.
pub fn preset(name: &str) -> Option<ExperimentRecipe> {
    presets().into_iter().find(|r| r.name == name)
}
