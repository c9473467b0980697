//! Teacher pretraining and student distillation loops.

use std::fmt::Write as _;

use ndarray::Array2;

use super::{
    assemble_loss, curriculum, Adam, CheckpointRule, LossBreakdown, LossInputs, TrainConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_against, EvalGrid};
use crate::net::{LayerSpec, MlpNetwork};
use crate::problems::{PdeProblem, Role};
use crate::sampling::{informed_weights, splitmix64, RoleSampler};

const TAG_TEACHER_INIT: u64 = 0x7465_6163_6869_6e69;
const TAG_STUDENT_INIT: u64 = 0x7374_7564_696e_6974;
const TAG_TEACHER_SAMPLING: u64 = 0x7465_6163_7361_6d70;
const TAG_STUDENT_SAMPLING: u64 = 0x7374_7564_7361_6d70;

/// Per-purpose seed derived from the run seed.
pub fn substream_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Selected parameters (best or last, per the checkpoint rule).
    pub network: MlpNetwork,
    pub history: Vec<LossBreakdown>,
    pub best_iteration: Option<usize>,
    pub best_loss: Option<f64>,
    /// Why training stopped early, if it did.
    pub diverged: Option<String>,
    /// `(iteration, network)` pairs kept every `snapshot_every` iterations
    /// once the burn-in (curriculum ramp, at least a fifth of the main
    /// phase) is over.
    pub snapshots: Vec<(usize, MlpNetwork)>,
}

/// Coarse in-domain grid used for the periodic RMSE probes.
pub fn probe_grid(problem: &PdeProblem) -> EvalGrid {
    let res = if problem.dim() == 3 {
        vec![13, 13, 6]
    } else {
        vec![41, 21]
    };
    EvalGrid::new(problem.domain().clone(), res).expect("problem box is valid")
}

fn check_spec(problem: &PdeProblem, spec: &LayerSpec) -> Result<()> {
    spec.validate()?;
    if spec.input_dim() != problem.dim() || spec.output_dim() != problem.n_outputs() {
        return Err(Error::Shape(format!(
            "layer sizes {:?} do not fit {} ({} inputs, {} outputs)",
            spec.sizes,
            problem.name(),
            problem.dim(),
            problem.n_outputs()
        )));
    }
    Ok(())
}

pub fn train_teacher(
    problem: &PdeProblem,
    spec: &LayerSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_spec(problem, spec)?;
    let net = MlpNetwork::init_xavier(
        spec.clone(),
        problem.domain().input_scale(),
        substream_seed(config.seed, TAG_TEACHER_INIT),
    )?;
    run(
        problem,
        net,
        None,
        config,
        substream_seed(config.seed, TAG_TEACHER_SAMPLING),
    )
}

pub fn distill_student(
    problem: &PdeProblem,
    teacher: &MlpNetwork,
    spec: &LayerSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_spec(problem, spec)?;
    problem.check_network(teacher)?;
    let net = MlpNetwork::init_xavier(
        spec.clone(),
        problem.domain().input_scale(),
        substream_seed(config.seed, TAG_STUDENT_INIT),
    )?;
    run(
        problem,
        net,
        Some(teacher),
        config,
        substream_seed(config.seed, TAG_STUDENT_SAMPLING),
    )
}

fn run(
    problem: &PdeProblem,
    mut net: MlpNetwork,
    teacher: Option<&MlpNetwork>,
    config: &TrainConfig,
    sampling_seed: u64,
) -> Result<TrainOutcome> {
    let mut sampler = RoleSampler::new(problem.dim(), sampling_seed)?;
    let probe = (config.probe_every > 0).then(|| {
        let grid = probe_grid(problem);
        let reference = problem.reference_batch(grid.points().view());
        (grid, reference)
    });
    let probe = match probe {
        Some((g, r)) => Some((g, r?)),
        None => None,
    };
    let t_c = if teacher.is_some() {
        config.curriculum_iterations()
    } else {
        None
    };
    let total = config.total_iterations();
    let mut adam = Adam::new(net.n_params());
    let mut params = net.params();
    let mut history = Vec::with_capacity(total);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut diverged = None;
    let mut snapshots = Vec::new();
    let burn_in = t_c.unwrap_or(0).max(config.iterations / 5);

    for k in 0..total {
        let lr = if k < config.iterations {
            config.learning_rate
        } else {
            config.fine_tune_lr
        };
        let c = t_c.map_or(1.0, |t| curriculum(k, t));

        let mut collocation =
            sampler.sample(problem, Role::Collocation, config.batches.collocation)?;
        if let (Some(eta), Some(t)) = (config.informed_eta, teacher) {
            collocation = informed_weights(&collocation, t, problem, eta)?;
        }
        let constraints = problem
            .constraint_roles()
            .iter()
            .map(|&role| {
                let n = if role == Role::Boundary {
                    config.batches.boundary
                } else {
                    config.batches.terminal
                };
                sampler.sample(problem, role, n)
            })
            .collect::<Result<Vec<_>>>()?;
        let kd = match teacher {
            Some(t) => {
                let batch =
                    sampler.sample(problem, Role::Distillation, config.batches.distillation)?;
                let targets: Array2<f64> = t.forward(batch.points.view())?;
                Some((batch, targets))
            }
            None => None,
        };
        let inputs = LossInputs {
            collocation: &collocation,
            constraints: &constraints,
            distillation: kd.as_ref().map(|(b, t)| (b, t)),
        };

        let (mut bd, grad) = match assemble_loss(&net, problem, &inputs, &config.weights, c) {
            Ok(v) => v,
            Err(Error::NonFinite(msg)) => {
                diverged = Some(format!("iteration {}: {msg}", k + 1));
                break;
            }
            Err(e) => return Err(e),
        };
        bd.iter = k + 1;
        if let Some((grid, reference)) = &probe {
            if k == 0 || (k + 1) % config.probe_every == 0 || k + 1 == total {
                let eval =
                    evaluate_against(problem, &net, grid.points().view(), reference.clone())?;
                bd.rmse_probe = Some(eval.accuracy.rmse);
            }
        }
        if c >= 1.0 && best.as_ref().is_none_or(|(_, l, _)| bd.total < *l) {
            best = Some((k + 1, bd.total, params.clone()));
        }
        history.push(bd);

        if let Err(e) = adam.step(&mut params, &grad, lr) {
            diverged = Some(format!("iteration {}: {e}", k + 1));
            break;
        }
        if params.iter().any(|p| !p.is_finite()) {
            diverged = Some(format!("iteration {}: non-finite parameters", k + 1));
            break;
        }
        net.set_params(&params)?;
        if config.snapshot_every > 0 && (k + 1) % config.snapshot_every == 0 && k + 1 > burn_in {
            snapshots.push((k + 1, net.clone()));
        }
    }

    let (best_iteration, best_loss) = match &best {
        Some((i, l, _)) => (Some(*i), Some(*l)),
        None => (None, None),
    };
    // after divergence `net` still holds the last finite parameters
    if let (CheckpointRule::BestTotal, Some((_, _, p))) = (config.checkpoint_rule, best) {
        net.set_params(&p)?;
    }
    Ok(TrainOutcome {
        network: net,
        history,
        best_iteration,
        best_loss,
        diverged,
        snapshots,
    })
}

/// Loss history as CSV, one row per iteration.
pub fn history_csv(history: &[LossBreakdown]) -> String {
    let mut out =
        String::from("iter,l_pde,l_bc,l_term,l_ic,l_kd,curriculum,total,grad_norm,rmse_probe\n");
    for b in history {
        let probe = b.rmse_probe.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            b.iter,
            b.l_pde,
            b.l_bc,
            b.l_term,
            b.l_ic,
            b.l_kd,
            b.curriculum,
            b.total,
            b.grad_norm,
            probe
        )
        .expect("write to string");
    }
    out
}
