use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::LayerSpec;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

/// `1 / (f + (1 - f) / r)`.
pub fn amdahl_bound(r_flops: f64, f: f64) -> Result<f64> {
    if !(r_flops >= 1.0) || r_flops.is_nan() {
        return Err(Error::InvalidParameter(format!("FLOP ratio {r_flops} < 1")));
    }
    if !(0.0..1.0).contains(&f) {
        return Err(Error::InvalidParameter(format!(
            "serial fraction {f} not in [0, 1)"
        )));
    }
    if r_flops.is_infinite() {
        return Ok(1.0 / f);
    }
    Ok(1.0 / (f + (1.0 - f) / r_flops))
}

/// Attainable-performance ratio student/teacher under the roofline
/// `min(P_peak, AI·BW)`.
pub fn roofline_factor(ai_student: f64, ai_teacher: f64, bw: f64, p_peak: f64) -> Result<f64> {
    positive("student arithmetic intensity", ai_student)?;
    positive("teacher arithmetic intensity", ai_teacher)?;
    positive("bandwidth", bw)?;
    positive("peak performance", p_peak)?;
    Ok(p_peak.min(ai_student * bw) / p_peak.min(ai_teacher * bw))
}

/// Simplified cap when both models are memory-bound.
pub fn memory_bound_cap(ai_student: f64, ai_teacher: f64) -> Result<f64> {
    positive("student arithmetic intensity", ai_student)?;
    positive("teacher arithmetic intensity", ai_teacher)?;
    Ok((ai_student / ai_teacher).min(1.0))
}

/// `min(r, amdahl(r, f), r·min(1, factor))`.
pub fn combined_bound(r_flops: f64, f: f64, factor: f64) -> Result<f64> {
    if !(factor >= 0.0) {
        return Err(Error::InvalidParameter(format!("roofline factor {factor}")));
    }
    let amdahl = amdahl_bound(r_flops, f)?;
    Ok(r_flops.min(amdahl).min(r_flops * factor.min(1.0)))
}

/// Idealized ceiling for a kernel running at the given fraction of peak.
pub fn utilization_ceiling(utilization: f64) -> Result<f64> {
    if !(utilization > 0.0 && utilization <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "utilization {utilization} not in (0, 1]"
        )));
    }
    Ok(1.0 / utilization)
}

/// User-supplied hardware model. Bandwidth in GB/s, peak in GFLOP/s,
/// intensities in FLOPs/byte.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareParams {
    pub f: f64,
    pub ai_teacher: f64,
    pub ai_student: f64,
    pub bw: f64,
    pub p_peak: f64,
}

impl Default for HardwareParams {
    fn default() -> Self {
        Self {
            f: 0.05,
            ai_teacher: 0.1,
            ai_student: 0.1,
            bw: 20.0,
            p_peak: 100.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupBounds {
    pub r_flops: f64,
    pub f: f64,
    pub ai_teacher: f64,
    pub ai_student: f64,
    pub bw: f64,
    pub p_peak: f64,
    pub amdahl_bound: f64,
    pub roofline_factor: f64,
    pub s_max: f64,
    /// Set when the roofline factor collapses the bound to zero.
    pub degenerate: bool,
}

impl SpeedupBounds {
    pub fn from_ratio(r_flops: f64, hw: &HardwareParams) -> Result<Self> {
        let amdahl = amdahl_bound(r_flops, hw.f)?;
        let factor = roofline_factor(hw.ai_student, hw.ai_teacher, hw.bw, hw.p_peak)?;
        let s_max = combined_bound(r_flops, hw.f, factor)?;
        Ok(Self {
            r_flops,
            f: hw.f,
            ai_teacher: hw.ai_teacher,
            ai_student: hw.ai_student,
            bw: hw.bw,
            p_peak: hw.p_peak,
            amdahl_bound: amdahl,
            roofline_factor: factor,
            s_max,
            degenerate: s_max == 0.0,
        })
    }

    /// Bounds for a teacher/student pair, with the FLOP ratio from MAC counts.
    pub fn for_specs(
        teacher: &LayerSpec,
        student: &LayerSpec,
        hw: &HardwareParams,
    ) -> Result<Self> {
        teacher.validate()?;
        student.validate()?;
        Self::from_ratio(teacher.mac_count() as f64 / student.mac_count() as f64, hw)
    }
}
