//! Virtual-clock simulation of the observe-infer-act loop.
//!
//! Phase durations come from the roofline lower bound plus a per-invocation
//! overhead. Schedules change how the action expert's denoising steps are
//! spent: step caching drops the broadcast steps, fusion overlaps the first
//! `s` steps with the backbone.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dpcache::{cache_plan, CacheConfig};
use crate::error::{Error, Result};
use crate::events::{Event, EventLog, PhaseKind};
use crate::fusion::{ContentionModel, FusionSchedule};
use crate::leaderboard::MeasurementRecord;
use crate::roofline::{
    invocation_time, operational_intensity, phase_latency_bound, ridge_point, HardwareSpec,
    ModelSpec, PhaseProfile, PhaseRole,
};

/// Roofline stand-in for SM occupancy: `min(1, I / ridge)`.
pub fn utilization_proxy(phase: &PhaseProfile, hw: &HardwareSpec) -> f64 {
    (operational_intensity(phase) / ridge_point(hw)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    #[default]
    Synchronous,
    DpCache {
        cache: CacheConfig,
    },
    Fused {
        fusion: FusionSchedule,
    },
    FusedPlusCache {
        fusion: FusionSchedule,
        cache: CacheConfig,
    },
}

impl Schedule {
    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Synchronous => "synchronous",
            Schedule::DpCache { .. } => "dp_cache",
            Schedule::Fused { .. } => "fused",
            Schedule::FusedPlusCache { .. } => "fused_plus_cache",
        }
    }

    pub fn is_fused(&self) -> bool {
        matches!(self, Schedule::Fused { .. } | Schedule::FusedPlusCache { .. })
    }

    fn cache(&self) -> Option<&CacheConfig> {
        match self {
            Schedule::DpCache { cache } | Schedule::FusedPlusCache { cache, .. } => Some(cache),
            _ => None,
        }
    }

    fn fusion(&self) -> Option<&FusionSchedule> {
        match self {
            Schedule::Fused { fusion } | Schedule::FusedPlusCache { fusion, .. } => Some(fusion),
            _ => None,
        }
    }
}

fn default_cycles() -> usize {
    10
}

fn zero_contention() -> ContentionModel {
    ContentionModel::zero()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub hardware: HardwareSpec,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_cycles")]
    pub n_cycles: usize,
    /// Seconds added to every invocation of the named phase.
    #[serde(default)]
    pub overheads: BTreeMap<String, f64>,
    #[serde(default = "zero_contention")]
    pub contention: ContentionModel,
    /// Report vision as its own phase instead of inside the backbone.
    #[serde(default)]
    pub separate_vision: bool,
    #[serde(default)]
    pub emit_events: bool,
}

impl SimConfig {
    pub fn new(model: ModelSpec, hardware: HardwareSpec) -> Self {
        Self {
            model,
            hardware,
            schedule: Schedule::Synchronous,
            n_cycles: default_cycles(),
            overheads: BTreeMap::new(),
            contention: ContentionModel::zero(),
            separate_vision: false,
            emit_events: false,
        }
    }

    /// Synchronous config carrying fitted overheads.
    pub fn calibrated(model: ModelSpec, hardware: HardwareSpec, cal: &Calibration) -> Self {
        Self {
            overheads: cal.overheads.clone(),
            ..Self::new(model, hardware)
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_contention(mut self, contention: ContentionModel) -> Self {
        self.contention = contention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.hardware.validate()?;
        self.contention.validate()?;
        if self.n_cycles == 0 {
            return Err(Error::InvalidConfig("n_cycles must be >= 1".into()));
        }
        for (name, v) in &self.overheads {
            if !self.model.phases.iter().any(|p| &p.name == name) {
                return Err(Error::InvalidConfig(format!(
                    "overhead for unknown phase `{name}` of {}",
                    self.model.name
                )));
            }
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidConfig(format!("overhead for `{name}` must be >= 0")));
            }
        }
        if self.schedule == Schedule::Synchronous {
            return Ok(());
        }
        let ae = self.model.action_expert().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{} schedule needs an action-expert phase in {}",
                self.schedule.name(),
                self.model.name
            ))
        })?;
        let steps = ae.invocations_per_cycle as usize;
        if let Some(cache) = self.schedule.cache() {
            if steps < 2 {
                return Err(Error::InvalidConfig(format!(
                    "step caching needs a multi-step action expert; {} runs {steps}",
                    self.model.name
                )));
            }
            cache.validate(steps).map_err(|e| match e {
                Error::InvalidConfig(m) => Error::InvalidConfig(format!(
                    "{m} (action expert of {} runs {steps} steps)",
                    self.model.name
                )),
                other => other,
            })?;
        }
        if let Some(f) = self.schedule.fusion() {
            f.validate()?;
            if f.total_steps != steps {
                return Err(Error::InvalidConfig(format!(
                    "fusion schedule has K = {} but the action expert of {} runs {steps} steps",
                    f.total_steps, self.model.name
                )));
            }
            if self.n_cycles < 2 {
                return Err(Error::InvalidConfig(
                    "fused schedules need n_cycles >= 2; cycle 0 is a synchronous cold start".into(),
                ));
            }
        }
        Ok(())
    }

    fn overhead(&self, phase: &PhaseProfile) -> f64 {
        self.overheads.get(&phase.name).copied().unwrap_or(0.0)
    }

    fn phase_time(&self, phase: &PhaseProfile) -> f64 {
        phase_latency_bound(phase, &self.hardware, self.overhead(phase))
    }

    fn role_time(&self, role: PhaseRole) -> f64 {
        self.model
            .phases
            .iter()
            .filter(|p| p.role == role)
            .map(|p| self.phase_time(p))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLatency {
    pub phase: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseUtilization {
    pub phase: String,
    pub proxy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub model: String,
    pub hardware: String,
    pub schedule: Schedule,
    pub n_cycles: usize,
    pub cycles_averaged: usize,
    pub cold_start_excluded: bool,
    pub mean_latency_ms: f64,
    pub frequency_hz: f64,
    pub synchronous_latency_ms: f64,
    pub speedup: f64,
    /// Per-phase time within one steady-state cycle. Sums to the cycle
    /// latency for the synchronous schedule; overlapped phases do not add.
    pub breakdown: Vec<PhaseLatency>,
    pub utilization: Vec<PhaseUtilization>,
    pub ae_steps_computed: usize,
    pub ae_steps_total: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub events: Option<EventLog>,
}

impl SimReport {
    pub fn phase_ms(&self, phase: &str) -> Option<f64> {
        self.breakdown.iter().find(|p| p.phase == phase).map(|p| p.latency_ms)
    }
}

/// One cycle's phase layout on the virtual clock, seconds from cycle start.
#[derive(Clone)]
struct CycleLayout {
    total: f64,
    spans: Vec<(usize, PhaseKind, f64, f64, u32)>,
}

struct Timing {
    vision: f64,
    vlm: f64,
    /// Cost of each action-expert step, zero for broadcast steps.
    steps: Vec<f64>,
    /// Expert time outside of the stepped phase (models without one).
    ae_flat: f64,
}

impl Timing {
    fn of(cfg: &SimConfig) -> Result<Self> {
        let vision = cfg.role_time(PhaseRole::Vision);
        let vlm = cfg.role_time(PhaseRole::Backbone);
        let Some(ae) = cfg.model.action_expert() else {
            return Ok(Self {
                vision,
                vlm,
                steps: Vec::new(),
                ae_flat: 0.0,
            });
        };
        let n = ae.invocations_per_cycle as usize;
        let per_step = invocation_time(ae, &cfg.hardware) + cfg.overhead(ae);
        let plan = match cfg.schedule.cache() {
            Some(c) => cache_plan(n, c)?,
            None => vec![true; n],
        };
        let steps = plan.iter().map(|&on| if on { per_step } else { 0.0 }).collect();
        // Additional expert phases beyond the first run unmodified.
        let extra = cfg
            .model
            .phases
            .iter()
            .filter(|p| p.role == PhaseRole::ActionExpert)
            .skip(1)
            .map(|p| cfg.phase_time(p))
            .sum();
        Ok(Self {
            vision,
            vlm,
            steps,
            ae_flat: extra,
        })
    }

    fn ae(&self) -> f64 {
        self.steps.iter().sum::<f64>() + self.ae_flat
    }

    fn sequential(&self) -> CycleLayout {
        let (v, b, a) = (self.vision, self.vlm, self.ae());
        CycleLayout {
            total: v + b + a,
            spans: vec![
                (0, PhaseKind::Vision, 0.0, v, 0),
                (0, PhaseKind::Vlm, v, v + b, 0),
                (0, PhaseKind::Ae, v + b, v + b + a, 0),
            ],
        }
    }

    fn fused(&self, f: &FusionSchedule, cm: &ContentionModel) -> CycleLayout {
        let seq = self.sequential();
        let stale: f64 = self.steps[..f.stale_steps].iter().sum();
        let fresh = self.ae() - stale;
        let (infl_v, infl_a) = cm.inflation();
        let (v, b) = (self.vision * infl_v, self.vlm * infl_v);
        let stale_t = stale * infl_a;
        let overlapped = (v + b).max(stale_t);
        if overlapped + fresh >= seq.total {
            return seq;
        }
        CycleLayout {
            total: overlapped + fresh,
            spans: vec![
                (0, PhaseKind::Vision, 0.0, v, 0),
                (0, PhaseKind::Vlm, v, v + b, 0),
                (1, PhaseKind::AeStale, 0.0, stale_t, 1),
                (1, PhaseKind::AeFresh, overlapped, overlapped + fresh, 0),
            ],
        }
    }
}

fn ms(s: f64) -> f64 {
    s * 1e3
}

fn breakdown(layout: &CycleLayout, separate_vision: bool) -> Vec<PhaseLatency> {
    let sum = |pred: &dyn Fn(PhaseKind) -> bool| -> f64 {
        layout
            .spans
            .iter()
            .filter(|s| pred(s.1))
            .map(|s| s.3 - s.2)
            .sum()
    };
    let mut out = Vec::new();
    if separate_vision {
        out.push(("vision", sum(&|k| k == PhaseKind::Vision)));
        out.push(("vlm", sum(&|k| k == PhaseKind::Vlm)));
    } else {
        out.push(("vlm", sum(&|k| matches!(k, PhaseKind::Vision | PhaseKind::Vlm))));
    }
    out.push((
        "action_expert",
        sum(&|k| matches!(k, PhaseKind::Ae | PhaseKind::AeStale | PhaseKind::AeFresh)),
    ));
    out.into_iter()
        .map(|(phase, s)| PhaseLatency {
            phase: phase.to_string(),
            latency_ms: ms(s),
        })
        .collect()
}

fn merged_profile(phases: &[&PhaseProfile]) -> Option<PhaseProfile> {
    let flops: f64 = phases
        .iter()
        .map(|p| p.flops_per_invocation * f64::from(p.invocations_per_cycle))
        .sum();
    let bytes: f64 = phases
        .iter()
        .map(|p| p.bytes_per_invocation * f64::from(p.invocations_per_cycle))
        .sum();
    let first = phases.first()?;
    Some(PhaseProfile {
        name: first.name.clone(),
        role: first.role,
        flops_per_invocation: flops,
        bytes_per_invocation: bytes,
        invocations_per_cycle: 1,
    })
}

fn utilization(cfg: &SimConfig) -> Vec<PhaseUtilization> {
    let of = |roles: &[PhaseRole]| -> Vec<&PhaseProfile> {
        cfg.model.phases.iter().filter(|p| roles.contains(&p.role)).collect()
    };
    let mut groups: Vec<(&str, Vec<&PhaseProfile>)> = Vec::new();
    if cfg.separate_vision {
        groups.push(("vision", of(&[PhaseRole::Vision])));
        groups.push(("vlm", of(&[PhaseRole::Backbone])));
    } else {
        groups.push(("vlm", of(&[PhaseRole::Vision, PhaseRole::Backbone])));
    }
    groups.push(("action_expert", of(&[PhaseRole::ActionExpert])));
    groups
        .into_iter()
        .filter_map(|(name, ps)| {
            merged_profile(&ps).map(|p| PhaseUtilization {
                phase: name.to_string(),
                proxy: utilization_proxy(&p, &cfg.hardware),
            })
        })
        .collect()
}

pub fn run_sim(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let timing = Timing::of(cfg)?;
    let baseline = SimConfig {
        schedule: Schedule::Synchronous,
        ..cfg.clone()
    };
    let sync = Timing::of(&baseline)?.sequential();
    let steady = match cfg.schedule.fusion() {
        Some(f) => timing.fused(f, &cfg.contention),
        None => timing.sequential(),
    };
    let fused = cfg.schedule.is_fused();

    let mut clock = 0.0;
    let mut latencies = Vec::with_capacity(cfg.n_cycles);
    let mut log = cfg.emit_events.then(EventLog::new);
    for cycle in 0..cfg.n_cycles {
        let layout = if fused && cycle == 0 {
            // No stale features yet. Step caching still applies.
            timing.sequential()
        } else if fused {
            steady.clone()
        } else {
            timing.sequential()
        };
        if let Some(log) = log.as_mut() {
            for &(worker, phase, start, end, staleness) in &layout.spans {
                if end > start {
                    log.push(Event {
                        cycle: cycle as u64,
                        worker,
                        phase,
                        start_us: (clock + start) * 1e6,
                        end_us: (clock + end) * 1e6,
                        staleness,
                    });
                }
            }
        }
        clock += layout.total;
        latencies.push(layout.total);
    }
    let skip = usize::from(fused);
    let averaged = &latencies[skip..];
    let mean_ms = ms(averaged.iter().sum::<f64>() / averaged.len() as f64);
    let sync_ms = ms(sync.total);

    let computed = timing.steps.iter().filter(|&&c| c > 0.0).count();
    Ok(SimReport {
        model: cfg.model.name.clone(),
        hardware: cfg.hardware.name.clone(),
        schedule: cfg.schedule,
        n_cycles: cfg.n_cycles,
        cycles_averaged: averaged.len(),
        cold_start_excluded: fused,
        mean_latency_ms: mean_ms,
        frequency_hz: 1000.0 / mean_ms,
        synchronous_latency_ms: sync_ms,
        speedup: sync_ms / mean_ms,
        breakdown: breakdown(&steady, cfg.separate_vision),
        utilization: utilization(cfg),
        ae_steps_computed: computed,
        ae_steps_total: timing.steps.len(),
        events: log,
    })
}

/// Fitted gap between the roofline lower bound and a measured latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: String,
    pub hardware: String,
    pub measured_ms: f64,
    pub bound_ms: f64,
    /// Total overhead per cycle.
    pub cycle_overhead_ms: f64,
    /// Seconds per invocation, keyed by phase name.
    pub overheads: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostic: Option<String>,
}

/// Relative slack below the bound that is treated as rounding and clamped.
const CLAMP_TOLERANCE: f64 = 1e-9;

/// Fit per-phase overheads so that the synchronous simulation reproduces
/// the mean measured latency of `model` on `hw`. The gap is spread across
/// phases in proportion to their lower-bound times, which keeps the phase
/// ratios of the roofline profile.
pub fn calibrate_overheads(
    records: &[MeasurementRecord],
    model: &ModelSpec,
    hw: &HardwareSpec,
) -> Result<Calibration> {
    model.validate()?;
    hw.validate()?;
    let matching: Vec<_> = records
        .iter()
        .filter(|r| r.model == model.name && r.hardware == hw.name)
        .collect();
    if matching.is_empty() {
        return Err(Error::Unknown {
            kind: "record",
            name: format!("{} on {}", model.name, hw.name),
        });
    }
    for r in &matching {
        r.validate()?;
    }
    let measured_ms = matching.iter().map(|r| r.latency_ms).sum::<f64>() / matching.len() as f64;
    let bounds: Vec<f64> = model
        .phases
        .iter()
        .map(|p| phase_latency_bound(p, hw, 0.0))
        .collect();
    let bound = bounds.iter().sum::<f64>();
    let bound_ms = ms(bound);
    let mut gap = measured_ms / 1e3 - bound;
    let mut diagnostic = None;
    if gap < 0.0 {
        if -gap > CLAMP_TOLERANCE * bound {
            return Err(Error::Calibration {
                measured_ms,
                bound_ms,
            });
        }
        diagnostic = Some(format!(
            "measured {measured_ms} ms is below the bound {bound_ms} ms by rounding; overhead clamped to 0"
        ));
        gap = 0.0;
    }
    let overheads = model
        .phases
        .iter()
        .zip(&bounds)
        .map(|(p, b)| {
            let share = gap * b / bound;
            (p.name.clone(), share / f64::from(p.invocations_per_cycle))
        })
        .collect();
    Ok(Calibration {
        model: model.name.clone(),
        hardware: hw.name.clone(),
        measured_ms,
        bound_ms,
        cycle_overhead_ms: ms(gap),
        overheads,
        diagnostic,
    })
}

/// Backbone (vision included) and action-expert times of one synchronous
/// cycle, seconds.
pub fn phase_split(cfg: &SimConfig) -> Result<(f64, f64)> {
    let base = SimConfig {
        schedule: Schedule::Synchronous,
        ..cfg.clone()
    };
    base.validate()?;
    let t = Timing::of(&base)?;
    Ok((t.vision + t.vlm, t.ae()))
}
