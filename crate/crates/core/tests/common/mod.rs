#![allow(dead_code)]

use kdpinn::jets::Activation;
use kdpinn::net::{LayerSpec, MlpNetwork};
use kdpinn::problems::{
    allen_cahn_problem_with, black_scholes_problem, burgers_problem, navier_stokes_problem,
    AllenCahnSettings, PdeProblem, Role,
};
use kdpinn::sampling::{RoleSampler, SampleBatch};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Xavier network on the problem box with small random biases.
pub fn random_net(
    problem: &PdeProblem,
    hidden: &[usize],
    act: Activation,
    seed: u64,
) -> MlpNetwork {
    let mut sizes = vec![problem.dim()];
    sizes.extend_from_slice(hidden);
    sizes.push(problem.n_outputs());
    let spec = LayerSpec::new(sizes, act).unwrap();
    let mut net = MlpNetwork::init_xavier(spec, problem.domain().input_scale(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let p: Vec<f64> = net
        .params()
        .iter()
        .map(|&w| {
            if w == 0.0 {
                rng.random_range(-0.3..0.3)
            } else {
                w
            }
        })
        .collect();
    net.set_params(&p).unwrap();
    net
}

pub fn all_problems() -> Vec<PdeProblem> {
    vec![
        black_scholes_problem(1.0, 0.05, 0.2, 1.0).unwrap(),
        burgers_problem(0.01 / std::f64::consts::PI).unwrap(),
        allen_cahn_problem_with(1e-3, AllenCahnSettings { nx: 64, nt: 64 }).unwrap(),
        navier_stokes_problem(0.01).unwrap(),
    ]
}

/// Small batches for every role of a problem, with non-uniform
/// collocation weights.
pub struct SmallBatches {
    pub collocation: SampleBatch,
    pub constraints: Vec<SampleBatch>,
    pub distillation: SampleBatch,
}

pub fn small_batches(problem: &PdeProblem, n: usize, seed: u64) -> SmallBatches {
    let mut s = RoleSampler::new(problem.dim(), seed).unwrap();
    let mut collocation = s.sample(problem, Role::Collocation, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    collocation.weights = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let constraints = problem
        .constraint_roles()
        .iter()
        .map(|&r| s.sample(problem, r, n).unwrap())
        .collect();
    let distillation = s.sample(problem, Role::Distillation, n).unwrap();
    SmallBatches {
        collocation,
        constraints,
        distillation,
    }
}

pub fn teacher_targets(teacher: &MlpNetwork, batch: &SampleBatch) -> Array2<f64> {
    teacher.forward(batch.points.view()).unwrap()
}
