//! Training point sets: scrambled Sobol batches per role, residual-informed
//! collocation weights and the out-of-domain evaluation boxes.

pub mod sobol;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::metrics::EvalGrid;
use crate::net::MlpNetwork;
use crate::problems::{DomainBox, PdeProblem, Role};

pub use sobol::{splitmix64, SobolStream};

/// Points of one dataset with per-point weights (mean 1).
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub role: Role,
    /// `n x d`, physical coordinates.
    pub points: Array2<f64>,
    pub weights: Vec<f64>,
}

impl SampleBatch {
    pub fn uniform(role: Role, points: Array2<f64>) -> Self {
        let n = points.nrows();
        Self {
            role,
            points,
            weights: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// `role,x0,..,weight` rows.
    pub fn csv_text(&self) -> String {
        let d = self.points.ncols();
        let mut out = String::from("role");
        for j in 0..d {
            write!(out, ",x{j}").expect("write to string");
        }
        out.push_str(",weight\n");
        for (row, w) in self.points.rows().into_iter().zip(&self.weights) {
            out.push_str(self.role.as_str());
            for v in row {
                write!(out, ",{v}").expect("write to string");
            }
            writeln!(out, ",{w}").expect("write to string");
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.csv_text()).map_err(|e| Error::io(path, e))
    }
}

/// Draws `n` points of a role from `stream`.
///
/// Collocation and distillation points fill the box. Constraint points are
/// split into consecutive blocks, one per face, with the face coordinate
/// set exactly.
pub fn sample_role(
    problem: &PdeProblem,
    role: Role,
    n: usize,
    stream: &mut SobolStream,
) -> Result<SampleBatch> {
    let faces = problem.faces(role)?;
    let domain = problem.domain();
    let d = domain.dim();
    if stream.dim() != d {
        return Err(Error::Shape(format!(
            "{}-d stream for a {}-d problem",
            stream.dim(),
            d
        )));
    }
    let unit = stream.next_points(n)?;
    let mut points = Array2::zeros((n, d));
    let mut x = vec![0.0; d];
    for (r, u) in unit.rows().into_iter().enumerate() {
        domain.from_unit(u.as_slice().expect("standard layout"), &mut x);
        if !faces.is_empty() {
            let face = faces[r * faces.len() / n];
            x[face.axis] = face.value;
        }
        points.row_mut(r).assign(&ndarray::ArrayView1::from(&x));
    }
    Ok(SampleBatch::uniform(role, points))
}

fn role_tag(role: Role) -> u64 {
    match role {
        Role::Collocation => 0x636f_6c6c,
        Role::Boundary => 0x626f_756e,
        Role::Terminal => 0x7465_726d,
        Role::Initial => 0x696e_6974,
        Role::Distillation => 0x6469_7374,
    }
}

/// One independently scrambled stream per role, all derived from a single
/// seed.
#[derive(Clone, Debug)]
pub struct RoleSampler {
    seed: u64,
    streams: Vec<(Role, SobolStream)>,
    dim: usize,
}

impl RoleSampler {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        SobolStream::unscrambled(dim)?;
        Ok(Self {
            seed,
            streams: Vec::new(),
            dim,
        })
    }

    pub fn role_seed(seed: u64, role: Role) -> u64 {
        splitmix64(seed ^ splitmix64(role_tag(role)))
    }

    pub fn stream(&mut self, role: Role) -> &mut SobolStream {
        let pos = match self.streams.iter().position(|(r, _)| *r == role) {
            Some(p) => p,
            None => {
                let s = SobolStream::new(self.dim, Self::role_seed(self.seed, role))
                    .expect("checked dim");
                self.streams.push((role, s));
                self.streams.len() - 1
            }
        };
        &mut self.streams[pos].1
    }

    pub fn sample(&mut self, problem: &PdeProblem, role: Role, n: usize) -> Result<SampleBatch> {
        sample_role(problem, role, n, self.stream(role))
    }
}

/// Values outside this range are accepted but were not the intended
/// operating regime.
pub const RECOMMENDED_ETA: (f64, f64) = (0.5, 1.0);

/// `1 + η |r_i| / max_j |r_j|` before normalization; all ones when every
/// residual vanishes.
pub fn raw_informed_weights(residual_magnitudes: &[f64], eta: f64) -> Vec<f64> {
    let max = residual_magnitudes
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    if max == 0.0 || !max.is_finite() {
        return vec![1.0; residual_magnitudes.len()];
    }
    residual_magnitudes
        .iter()
        .map(|r| 1.0 + eta * r.abs() / max)
        .collect()
}

/// Rescales weights in place to mean 1.
pub fn normalize_mean_one(weights: &mut [f64]) {
    if weights.is_empty() {
        return;
    }
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    for w in weights {
        *w /= mean;
    }
}

/// Reweights a collocation batch by the teacher's residual magnitude (the
/// Euclidean norm over equations), normalized to mean 1.
pub fn informed_weights(
    batch: &SampleBatch,
    teacher: &MlpNetwork,
    problem: &PdeProblem,
    eta: f64,
) -> Result<SampleBatch> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "informed-sampling eta {eta}"
        )));
    }
    let r = problem.network_residuals(teacher, batch.points.view())?;
    let mags: Vec<f64> = r
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut weights = raw_informed_weights(&mags, eta);
    normalize_mean_one(&mut weights);
    Ok(SampleBatch {
        role: batch.role,
        points: batch.points.clone(),
        weights,
    })
}

/// Out-of-domain evaluation box for the Black–Scholes benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct OodRegion {
    pub name: &'static str,
    pub domain: DomainBox,
    pub resolution: [usize; 2],
}

impl OodRegion {
    pub fn grid(&self) -> EvalGrid {
        EvalGrid::new(self.domain.clone(), self.resolution.to_vec()).expect("fixed valid region")
    }
}

/// The five (S, t) boxes, each with a 200 x 80 grid.
pub fn ood_regions() -> Vec<OodRegion> {
    let region = |name, s: (f64, f64), t: (f64, f64)| OodRegion {
        name,
        domain: DomainBox::new(vec![s.0, t.0], vec![s.1, t.1], Some(1)).expect("fixed valid box"),
        resolution: [200, 80],
    };
    vec![
        region("mild_right", (1.6, 2.0), (0.0, 1.0)),
        region("moderate_right", (2.0, 3.0), (0.0, 1.0)),
        region("hard_right", (3.0, 5.0), (0.0, 1.0)),
        region("left", (0.2, 0.49), (0.0, 1.0)),
        region("diag", (1.6, 3.0), (0.6, 1.0)),
    ]
}
