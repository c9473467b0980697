//! Single-threaded inference latency harness and analytic speedup bounds.

pub mod bounds;

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::MlpNetwork;

pub use bounds::{
    amdahl_bound, combined_bound, memory_bound_cap, roofline_factor, HardwareParams, SpeedupBounds,
};

/// Environment variable controlling the worker count; only `1` is accepted.
pub const THREADS_ENV: &str = "KDPINN_THREADS";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvFingerprint {
    /// Worker threads used inside the timed region (always 1).
    pub threads: usize,
    pub logical_cores: usize,
    pub cpu_model: String,
    pub build: String,
}

impl EnvFingerprint {
    pub fn current() -> Self {
        let logical_cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|m| m.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        let profile = if cfg!(debug_assertions) {
            "debug"
        } else {
            "release"
        };
        let simd = if crate::jets::fastmath::simd_available() {
            "avx2+fma"
        } else {
            "scalar"
        };
        Self {
            threads: 1,
            logical_cores,
            cpu_model,
            build: format!("{profile}, {simd} activations, {}", std::env::consts::ARCH),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyPlan {
    pub batch: usize,
    pub warmup: usize,
    pub runs: usize,
    /// Seed of the uniformly sampled inputs.
    pub seed: u64,
}

impl Default for LatencyPlan {
    fn default() -> Self {
        Self {
            batch: 20_000,
            warmup: 20,
            runs: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub model_id: String,
    pub batch: usize,
    pub warmup: usize,
    pub runs: usize,
    /// Wall time of every timed forward pass, in recording order.
    pub times_ms: Vec<f64>,
    pub median_ms: f64,
    /// Secondary statistic; the median is the one reported.
    pub mean_ms: f64,
    pub fingerprint: EnvFingerprint,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Refuses unless the worker count is (or defaults to) one.
pub fn check_single_thread() -> Result<()> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(()),
        Ok(v) if v.trim() == "1" => Ok(()),
        Ok(v) => Err(Error::Environment(format!(
            "{THREADS_ENV}={v}: the latency harness only runs with a single worker thread"
        ))),
        Err(e) => Err(Error::Environment(format!("{THREADS_ENV}: {e}"))),
    }
}

/// Smallest observable nonzero step of the monotonic clock.
pub fn clock_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

fn check_clock() -> Result<()> {
    let res = clock_resolution();
    if res > Duration::from_micros(1) {
        return Err(Error::Environment(format!(
            "clock resolution {res:?} is coarser than 1 µs"
        )));
    }
    Ok(())
}

/// Uniform points in the network's input box, `n x d`.
pub fn uniform_inputs(net: &MlpNetwork, n: usize, seed: u64) -> Array2<f64> {
    let scale = net.input_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, scale.dim()), |(_, i)| {
        rng.random_range(scale.lo[i]..scale.hi[i])
    })
}

/// Times `plan.runs` full forward passes over one pre-scaled batch after
/// `plan.warmup` untimed passes.
pub fn measure_latency(
    net: &MlpNetwork,
    model_id: &str,
    plan: &LatencyPlan,
) -> Result<LatencyReport> {
    Ok(measure_latencies(&[(net, model_id)], plan)?.remove(0))
}

/// Like [`measure_latency`] for several models, with their timed passes
/// interleaved so that load drift on the machine hits every model alike.
/// Each model gets its own batch drawn from its input box with `plan.seed`.
pub fn measure_latencies(
    models: &[(&MlpNetwork, &str)],
    plan: &LatencyPlan,
) -> Result<Vec<LatencyReport>> {
    check_single_thread()?;
    check_clock()?;
    if plan.batch == 0 || plan.runs == 0 {
        return Err(Error::InvalidParameter(format!("latency plan {plan:?}")));
    }
    let mut scaled = Vec::with_capacity(models.len());
    for (net, _) in models {
        let points = uniform_inputs(net, plan.batch, plan.seed);
        scaled.push(net.prescale(points.view())?);
    }
    let mut sink = 0.0;
    for _ in 0..plan.warmup {
        for ((net, _), x) in models.iter().zip(&scaled) {
            sink += net.forward_scaled(x)[[0, 0]];
        }
    }
    let mut times_ms = vec![Vec::with_capacity(plan.runs); models.len()];
    for _ in 0..plan.runs {
        for (((net, _), x), times) in models.iter().zip(&scaled).zip(&mut times_ms) {
            let start = Instant::now();
            let out = net.forward_scaled(x);
            times.push(start.elapsed().as_secs_f64() * 1e3);
            sink += out[[0, 0]];
        }
    }
    std::hint::black_box(sink);
    let fingerprint = EnvFingerprint::current();
    Ok(models
        .iter()
        .zip(times_ms)
        .map(|((_, id), times_ms)| LatencyReport {
            model_id: id.to_string(),
            batch: plan.batch,
            warmup: plan.warmup,
            runs: plan.runs,
            median_ms: median(&times_ms).expect("runs >= 1"),
            mean_ms: times_ms.iter().sum::<f64>() / times_ms.len() as f64,
            times_ms,
            fingerprint: fingerprint.clone(),
        })
        .collect())
}

/// Ratio of medians, teacher over student.
pub fn speedup_ratio(teacher: &LatencyReport, student: &LatencyReport) -> Result<f64> {
    if teacher.batch != student.batch {
        return Err(Error::Incompatible(format!(
            "batch sizes differ ({} vs {})",
            teacher.batch, student.batch
        )));
    }
    if teacher.fingerprint != student.fingerprint {
        return Err(Error::Incompatible(format!(
            "environments differ: {:?} vs {:?}",
            teacher.fingerprint, student.fingerprint
        )));
    }
    if !(student.median_ms > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "student median {} ms",
            student.median_ms
        )));
    }
    Ok(teacher.median_ms / student.median_ms)
}
