//! Hardware and model descriptions plus roofline arithmetic.
//!
//! All quantities are kept in base SI units (FLOP, FLOP/s, bytes, bytes/s,
//! seconds). Conversion to and from the human-facing units of the catalog
//! files happens in [`crate::catalog`].

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{invalid, Result};

/// Peak FP16/BF16 throughput below which a device is a basic producer.
pub const BASIC_TIER_CEILING_FLOPS: f64 = 20e12;
/// Peak FP16/BF16 throughput at which a device becomes an ultra producer.
pub const ULTRA_TIER_FLOOR_FLOPS: f64 = 100e12;
/// Models with strictly more parameters than this are big consumers.
pub const BIG_MODEL_PARAMS: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardwareTier {
    Basic,
    Standard,
    Ultra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumerTier {
    Small,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundedness {
    ComputeBound,
    MemoryBound,
}

impl fmt::Display for Boundedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ComputeBound => write!(f, "compute-bound"),
            Self::MemoryBound => write!(f, "memory-bound"),
        }
    }
}

/// An accelerator as seen by the roofline model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareSpec {
    pub name: String,
    /// FP16/BF16 peak, FLOP/s.
    pub peak_flops: f64,
    pub memory_bytes: f64,
    /// Bytes/s.
    pub bandwidth: f64,
    /// Acquisition cost in USD.
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdp: Option<f64>,
}

impl HardwareSpec {
    pub fn new(
        name: impl Into<String>,
        peak_flops: f64,
        memory_bytes: f64,
        bandwidth: f64,
        cost: f64,
    ) -> Result<Self> {
        let hw = Self {
            name: name.into(),
            peak_flops,
            memory_bytes,
            bandwidth,
            cost,
            tdp: None,
        };
        hw.validate()?;
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.peak_flops) {
            return Err(invalid(format!("{}: peak_flops must be > 0", self.name)));
        }
        if !positive(self.bandwidth) {
            return Err(invalid(format!("{}: bandwidth must be > 0", self.name)));
        }
        if !positive(self.memory_bytes) {
            return Err(invalid(format!("{}: memory must be > 0", self.name)));
        }
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(invalid(format!("{}: cost must be >= 0", self.name)));
        }
        if let Some(tdp) = self.tdp {
            if !positive(tdp) {
                return Err(invalid(format!("{}: tdp must be > 0", self.name)));
            }
        }
        Ok(())
    }

    pub fn tier(&self) -> HardwareTier {
        tier_hardware(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseRole {
    Vision,
    Backbone,
    ActionExpert,
}

/// Work done by one phase of the observe-infer-act cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    pub name: String,
    pub role: PhaseRole,
    pub flops_per_invocation: f64,
    pub bytes_per_invocation: f64,
    /// Denoising steps for the action expert, 1 for single-pass phases.
    pub invocations_per_cycle: u32,
}

impl PhaseProfile {
    pub fn new(
        name: impl Into<String>,
        role: PhaseRole,
        flops_per_invocation: f64,
        bytes_per_invocation: f64,
        invocations_per_cycle: u32,
    ) -> Result<Self> {
        let p = Self {
            name: name.into(),
            role,
            flops_per_invocation,
            bytes_per_invocation,
            invocations_per_cycle,
        };
        p.validate()?;
        Ok(p)
    }

    /// A phase whose byte traffic is its parameter footprint.
    pub fn from_params(
        name: impl Into<String>,
        role: PhaseRole,
        flops_per_invocation: f64,
        params: f64,
        precision_bytes: f64,
        invocations_per_cycle: u32,
    ) -> Result<Self> {
        Self::new(
            name,
            role,
            flops_per_invocation,
            params * precision_bytes,
            invocations_per_cycle,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flops_per_invocation.is_finite() && self.flops_per_invocation > 0.0) {
            return Err(invalid(format!("{}: flops must be > 0", self.name)));
        }
        if !(self.bytes_per_invocation.is_finite() && self.bytes_per_invocation > 0.0) {
            return Err(invalid(format!("{}: bytes must be > 0", self.name)));
        }
        if self.invocations_per_cycle < 1 {
            return Err(invalid(format!("{}: invocations must be >= 1", self.name)));
        }
        Ok(())
    }

    pub fn with_invocations(&self, invocations: u32) -> Self {
        Self {
            invocations_per_cycle: invocations,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub param_count: f64,
    pub precision_bytes: f64,
    pub phases: Vec<PhaseProfile>,
    /// Denoising steps of the action expert per cycle.
    pub denoise_steps: u32,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.param_count.is_finite() && self.param_count >= 0.0) {
            return Err(invalid(format!("{}: param_count must be >= 0", self.name)));
        }
        if !(self.precision_bytes.is_finite() && self.precision_bytes > 0.0) {
            return Err(invalid(format!("{}: precision_bytes must be > 0", self.name)));
        }
        if self.phases.is_empty() {
            return Err(invalid(format!("{}: phases must be non-empty", self.name)));
        }
        for p in &self.phases {
            p.validate()?;
        }
        Ok(())
    }

    pub fn consumer_tier(&self) -> ConsumerTier {
        tier_model(self)
    }

    pub fn weight_bytes(&self) -> f64 {
        self.param_count * self.precision_bytes
    }

    pub fn phase(&self, role: PhaseRole) -> Option<&PhaseProfile> {
        self.phases.iter().find(|p| p.role == role)
    }

    pub fn action_expert(&self) -> Option<&PhaseProfile> {
        self.phase(PhaseRole::ActionExpert)
    }
}

/// Intensity at which the compute and bandwidth roofs meet, FLOPs/byte.
pub fn ridge_point(hw: &HardwareSpec) -> f64 {
    hw.peak_flops / hw.bandwidth
}

/// FLOPs per byte of memory traffic for one invocation of `phase`.
pub fn operational_intensity(phase: &PhaseProfile) -> f64 {
    phase.flops_per_invocation / phase.bytes_per_invocation
}

/// A tie at the ridge is reported as memory-bound.
pub fn classify_boundedness(phase: &PhaseProfile, hw: &HardwareSpec) -> Boundedness {
    if operational_intensity(phase) > ridge_point(hw) {
        Boundedness::ComputeBound
    } else {
        Boundedness::MemoryBound
    }
}

pub fn attainable_throughput(phase: &PhaseProfile, hw: &HardwareSpec) -> f64 {
    hw.peak_flops
        .min(operational_intensity(phase) * hw.bandwidth)
}

/// Time of one invocation under the roofline, without overhead.
pub fn invocation_time(phase: &PhaseProfile, hw: &HardwareSpec) -> f64 {
    let compute = phase.flops_per_invocation / hw.peak_flops;
    let memory = phase.bytes_per_invocation / hw.bandwidth;
    compute.max(memory)
}

/// Lower bound on a phase's per-cycle latency: every invocation pays the
/// slower of its two roofs plus a fixed `overhead` (seconds).
pub fn phase_latency_bound(phase: &PhaseProfile, hw: &HardwareSpec, overhead: f64) -> f64 {
    f64::from(phase.invocations_per_cycle) * (invocation_time(phase, hw) + overhead)
}

pub fn tier_hardware(hw: &HardwareSpec) -> HardwareTier {
    if hw.peak_flops < BASIC_TIER_CEILING_FLOPS {
        HardwareTier::Basic
    } else if hw.peak_flops < ULTRA_TIER_FLOOR_FLOPS {
        HardwareTier::Standard
    } else {
        HardwareTier::Ultra
    }
}

pub fn tier_model(m: &ModelSpec) -> ConsumerTier {
    if m.param_count > BIG_MODEL_PARAMS {
        ConsumerTier::Big
    } else {
        ConsumerTier::Small
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hw(name: &str, tflops: f64, gb: f64, gb_s: f64) -> HardwareSpec {
        HardwareSpec::new(name, tflops * 1e12, gb * 1e9, gb_s * 1e9, 0.0).unwrap()
    }

    fn phase(flops: f64, bytes: f64, n: u32) -> PhaseProfile {
        PhaseProfile::new("p", PhaseRole::Backbone, flops, bytes, n).unwrap()
    }

    #[test]
    fn ridge_points_from_specs() {
        assert!((ridge_point(&hw("4090", 330.0, 24.0, 1000.0)) - 330.0).abs() < 1e-9);
        assert!((ridge_point(&hw("Thor", 258.0, 128.0, 273.0)) - 945.054945).abs() < 1e-5);
        // The text says 208 for Orin; the listed specs give 205.88.
        assert!((ridge_point(&hw("Orin", 42.0, 64.0, 204.0)) - 205.882353).abs() < 1e-5);
    }

    #[test]
    fn intensity_examples() {
        let vlm_layer = phase(185.1e9, 220e6, 1);
        assert!((operational_intensity(&vlm_layer) - 841.3636).abs() < 1e-3);
        assert_eq!(operational_intensity(&phase(100.0, 100.0, 1)), 1.0);
        assert_eq!(operational_intensity(&phase(64.5e9, 1e9, 1)), 64.5);
    }

    #[test]
    fn boundedness_and_ties() {
        let rtx = hw("4090", 330.0, 24.0, 1000.0);
        let thor = hw("Thor", 258.0, 128.0, 273.0);
        assert_eq!(
            classify_boundedness(&phase(185.1e9, 220e6, 1), &rtx),
            Boundedness::ComputeBound
        );
        assert_eq!(
            classify_boundedness(&phase(64.5e9, 1e9, 10), &thor),
            Boundedness::MemoryBound
        );
        assert_eq!(
            classify_boundedness(&phase(330.0, 1.0, 1), &rtx),
            Boundedness::MemoryBound
        );
    }

    #[test]
    fn attainable_examples() {
        let rtx = hw("4090", 330.0, 24.0, 1000.0);
        let ae = phase(64.5e9, 1e9, 10);
        assert!((attainable_throughput(&ae, &rtx) - 6.45e13).abs() < 1.0);
        assert_eq!(attainable_throughput(&phase(185.1e9, 220e6, 1), &rtx), 330e12);
        assert_eq!(attainable_throughput(&phase(330.0, 1.0, 1), &rtx), 330e12);
    }

    #[test]
    fn latency_bound_max_rule_and_linearity() {
        // 1 ms of compute, 2 ms of memory traffic.
        let dev = HardwareSpec::new("d", 1e12, 1e9, 1e9, 0.0).unwrap();
        let p = phase(1e9, 2e6, 1);
        assert!((phase_latency_bound(&p, &dev, 0.0) - 2e-3).abs() < 1e-15);
        let p100 = p.with_invocations(100);
        assert!((phase_latency_bound(&p100, &dev, 0.0) - 0.2).abs() < 1e-12);
        assert!((phase_latency_bound(&p100, &dev, 1e-3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn tiers() {
        assert_eq!(tier_hardware(&hw("310B", 10.0, 12.0, 51.2)), HardwareTier::Basic);
        assert_eq!(tier_hardware(&hw("B60", 90.0, 24.0, 456.0)), HardwareTier::Standard);
        assert_eq!(tier_hardware(&hw("4090", 330.0, 24.0, 1000.0)), HardwareTier::Ultra);
        assert_eq!(tier_hardware(&hw("edge", 20.0, 1.0, 1.0)), HardwareTier::Standard);
        assert_eq!(tier_hardware(&hw("edge", 100.0, 1.0, 1.0)), HardwareTier::Ultra);

        let mut m = ModelSpec {
            name: "m".into(),
            param_count: 7e9,
            precision_bytes: 2.0,
            phases: vec![phase(1.0, 1.0, 1)],
            denoise_steps: 1,
        };
        assert_eq!(tier_model(&m), ConsumerTier::Big);
        m.param_count = 1e9;
        assert_eq!(tier_model(&m), ConsumerTier::Small);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(HardwareSpec::new("x", 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(HardwareSpec::new("x", 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(HardwareSpec::new("x", 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(HardwareSpec::new("x", 1.0, 1.0, 1.0, -1.0).is_err());
        assert!(PhaseProfile::new("p", PhaseRole::Vision, 1.0, 1.0, 0).is_err());
        assert!(PhaseProfile::new("p", PhaseRole::Vision, 0.0, 1.0, 1).is_err());
    }
}
