//! Requests and responses shared by the command line and the HTTP service.
//!
//! Both front ends call the same functions and render the result with
//! [`render`], so a `rank` through either one produces the same document.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::catalog::{Catalog, HardwareRow};
use crate::dpcache::{deviation, l1_rel_series, profile_stability, Signal, CacheConfig, StableSegment, ToyPolicy};
use crate::events::EventLog;
use crate::error::{invalid, Error, Result};
use crate::fusion::{
    benchmark_fusion, event_log, fused_latency, predicted_speedup, staleness_similarity_report, ContentionModel,
    FusionSchedule, ObservationStream, Pacing, SimilarityReport, ToyVla, Workers,
};
use crate::leaderboard::{
    energy_from_power_trace, select_platform, Constraint, Outcome, PowerSample, RankingMode, RankingPolicy,
    Recommendation,
};
use crate::roofline::{
    attainable_throughput, classify_boundedness, operational_intensity, phase_latency_bound,
    ridge_point, Boundedness, ConsumerTier, HardwareTier, ModelSpec, PhaseRole,
};
use crate::sim::{calibrate_overheads, phase_split, run_sim, utilization_proxy, Schedule, SimConfig, SimReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    Table,
    #[default]
    Doc,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Format::Table),
            "doc" => Ok(Format::Doc),
            other => Err(invalid(format!("unknown format `{other}`; expected table or doc"))),
        }
    }
}

/// Responses that also have a plain-text table form.
pub trait Tabular: Serialize {
    fn table(&self) -> String;
}

/// Pretty JSON with a trailing newline, or the table form.
pub fn render<T: Tabular>(value: &T, format: Format) -> String {
    match format {
        Format::Doc => doc(value),
        Format::Table => value.table(),
    }
}

pub fn doc<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("responses serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareView {
    #[serde(flatten)]
    pub row: HardwareRow,
    pub ridge_flops_per_byte: f64,
    pub tier: HardwareTier,
}

pub fn hardware(cat: &Catalog) -> Vec<HardwareView> {
    cat.hardware
        .iter()
        .map(|row| {
            let spec = row.spec();
            HardwareView {
                row: row.clone(),
                ridge_flops_per_byte: ridge_point(&spec),
                tier: spec.tier(),
            }
        })
        .collect()
}

impl Tabular for Vec<HardwareView> {
    fn table(&self) -> String {
        let mut out = format!(
            "{:<6} {:<20} {:>7} {:>7} {:>9} {:>7} {:>8} {}\n",
            "name", "display", "TFLOP/s", "mem GB", "BW GB/s", "$", "ridge", "tier"
        );
        for h in self {
            let r = &h.row;
            let _ = writeln!(
                out,
                "{:<6} {:<20} {:>7} {:>7} {:>9} {:>7} {:>8.2} {:?}",
                r.name,
                r.display_name.as_deref().unwrap_or(""),
                r.peak_tflops,
                r.memory_gb,
                r.bandwidth_gb_s,
                r.cost_usd,
                h.ridge_flops_per_byte,
                h.tier
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelView {
    #[serde(flatten)]
    pub spec: ModelSpec,
    pub weight_bytes: f64,
    pub consumer_tier: ConsumerTier,
}

pub fn models(cat: &Catalog) -> Vec<ModelView> {
    cat.models
        .iter()
        .map(|m| ModelView {
            spec: m.clone(),
            weight_bytes: m.weight_bytes(),
            consumer_tier: m.consumer_tier(),
        })
        .collect()
}

impl Tabular for Vec<ModelView> {
    fn table(&self) -> String {
        let mut out = format!("{:<18} {:>10} {:>10} {:>6} {}\n", "name", "params", "weights GB", "steps", "phases");
        for m in self {
            let phases: Vec<_> = m.spec.phases.iter().map(|p| p.name.as_str()).collect();
            let _ = writeln!(
                out,
                "{:<18} {:>10.3e} {:>10.2} {:>6} {}",
                m.spec.name,
                m.spec.param_count,
                m.weight_bytes / 1e9,
                m.spec.denoise_steps,
                phases.join(", ")
            );
        }
        out
    }
}

pub fn records(cat: &Catalog, model: Option<&str>) -> Result<Vec<crate::leaderboard::MeasurementRecord>> {
    match model {
        Some(m) => {
            cat.model(m)?;
            Ok(cat.records_for(m))
        }
        None => Ok(cat.records.clone()),
    }
}

impl Tabular for Vec<crate::leaderboard::MeasurementRecord> {
    fn table(&self) -> String {
        let mut out = format!(
            "{:<18} {:<6} {:>10} {:>8} {:>9} {:>7} {:>7} {}\n",
            "model", "hw", "latency ms", "Hz", "energy kJ", "$", "score", "precision"
        );
        for r in self {
            let _ = writeln!(
                out,
                "{:<18} {:<6} {:>10.1} {:>8.2} {:>9.3} {:>7} {:>7.1} {}",
                r.model,
                r.hardware,
                r.latency_ms,
                r.frequency_hz(),
                r.energy_kj,
                r.cost_usd,
                r.score_pct,
                r.precision
            );
        }
        out
    }
}

fn default_policy() -> RankingPolicy {
    RankingPolicy::new(RankingMode::CET)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankRequest {
    pub model: String,
    #[serde(default)]
    pub constraint: Constraint,
    #[serde(default = "default_policy")]
    pub policy: RankingPolicy,
}

/// Select a platform for a catalog model against every catalog device.
pub fn rank(cat: &Catalog, req: &RankRequest) -> Result<Recommendation> {
    let model = cat.model(&req.model)?;
    select_platform(model, &cat.records, &cat.hardware_specs(), &req.constraint, &req.policy)
}

impl Tabular for Recommendation {
    fn table(&self) -> String {
        let mut out = format!("model {}  policy {:?}\n", self.model, self.policy.mode);
        if self.outcome == Outcome::NoFeasiblePair {
            out.push_str("no feasible pair\n");
        } else {
            let _ = writeln!(
                out,
                "{:>4} {:<6} {:>10} {:>10} {:>8} {:>9} {:>7}",
                "rank", "hw", "key", "latency ms", "Hz", "energy kJ", "$"
            );
            for e in &self.entries {
                let _ = writeln!(
                    out,
                    "{:>4} {:<6} {:>10.4} {:>10.1} {:>8.2} {:>9.3} {:>7}",
                    e.rank, e.hardware, e.sort_key, e.latency_ms, e.frequency_hz, e.energy_kj, e.cost_usd
                );
            }
        }
        for x in &self.excluded {
            let codes: Vec<_> = x.reasons.iter().map(|r| r.code()).collect();
            let _ = writeln!(out, "excluded {:<6} {}", x.hardware, codes.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    pub phase: String,
    pub role: PhaseRole,
    pub intensity_flops_per_byte: f64,
    pub attainable_flops: f64,
    pub boundedness: Boundedness,
    pub utilization_proxy: f64,
    pub latency_bound_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflineReport {
    pub hardware: String,
    pub peak_flops: f64,
    pub bandwidth_bytes_s: f64,
    pub ridge_flops_per_byte: f64,
    pub tier: HardwareTier,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub points: Vec<RooflinePoint>,
}

pub fn roofline(cat: &Catalog, hw: &str, model: Option<&str>) -> Result<RooflineReport> {
    let spec = cat.hardware_spec(hw)?;
    let model = model.map(|m| cat.model(m)).transpose()?;
    let points = model
        .map(|m| {
            m.phases
                .iter()
                .map(|p| RooflinePoint {
                    phase: p.name.clone(),
                    role: p.role,
                    intensity_flops_per_byte: operational_intensity(p),
                    attainable_flops: attainable_throughput(p, &spec),
                    boundedness: classify_boundedness(p, &spec),
                    utilization_proxy: utilization_proxy(p, &spec),
                    latency_bound_ms: phase_latency_bound(p, &spec, 0.0) * 1e3,
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(RooflineReport {
        hardware: spec.name.clone(),
        peak_flops: spec.peak_flops,
        bandwidth_bytes_s: spec.bandwidth,
        ridge_flops_per_byte: ridge_point(&spec),
        tier: spec.tier(),
        model: model.map(|m| m.name.clone()),
        points,
    })
}

impl Tabular for RooflineReport {
    fn table(&self) -> String {
        let mut out = format!(
            "{}  peak {:.1} TFLOP/s  bandwidth {:.1} GB/s  ridge {:.2} FLOP/B  tier {:?}\n",
            self.hardware,
            self.peak_flops / 1e12,
            self.bandwidth_bytes_s / 1e9,
            self.ridge_flops_per_byte,
            self.tier
        );
        if !self.points.is_empty() {
            let _ = writeln!(
                out,
                "{:<16} {:>10} {:>12} {:>13} {:>6} {:>10}",
                "phase", "FLOP/B", "TFLOP/s", "bound", "util", "min ms"
            );
        }
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:<16} {:>10.2} {:>12.2} {:>13} {:>6.3} {:>10.3}",
                p.phase,
                p.intensity_flops_per_byte,
                p.attainable_flops / 1e12,
                p.boundedness.to_string(),
                p.utilization_proxy,
                p.latency_bound_ms
            );
        }
        out
    }
}

fn default_cycles() -> usize {
    10
}

fn yes() -> bool {
    true
}

/// How a simulation picks its contention model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentionChoice {
    /// No contention.
    None,
    /// The catalog preset for the pair; none when the catalog has no preset.
    #[default]
    Preset,
    Custom(ContentionModel),
}

/// Simulation of catalog entries referenced by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimRequest {
    pub model: String,
    pub hardware: String,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_cycles")]
    pub n_cycles: usize,
    /// Fit overheads to the catalog measurement when one exists.
    #[serde(default = "yes")]
    pub calibrate: bool,
    #[serde(default)]
    pub contention: ContentionChoice,
    #[serde(default)]
    pub separate_vision: bool,
    #[serde(default)]
    pub emit_events: bool,
}

impl SimRequest {
    pub fn new(model: &str, hardware: &str, schedule: Schedule) -> Self {
        Self {
            model: model.into(),
            hardware: hardware.into(),
            schedule,
            n_cycles: default_cycles(),
            calibrate: true,
            contention: ContentionChoice::Preset,
            separate_vision: false,
            emit_events: false,
        }
    }

    pub fn resolve(&self, cat: &Catalog) -> Result<SimConfig> {
        let model = cat.model(&self.model)?.clone();
        let hw = cat.hardware_spec(&self.hardware)?;
        let mut cfg = if self.calibrate && cat.record(&self.model, &self.hardware).is_some() {
            let cal = calibrate_overheads(&cat.records, &model, &hw)?;
            SimConfig::calibrated(model, hw, &cal)
        } else {
            SimConfig::new(model, hw)
        };
        cfg.schedule = self.schedule;
        cfg.n_cycles = self.n_cycles;
        cfg.separate_vision = self.separate_vision;
        cfg.emit_events = self.emit_events;
        cfg.contention = match self.contention {
            ContentionChoice::None => ContentionModel::zero(),
            ContentionChoice::Preset => cat
                .contention_for(&self.model, &self.hardware)
                .map_or_else(ContentionModel::zero, |p| p.contention),
            ContentionChoice::Custom(c) => c,
        };
        Ok(cfg)
    }
}

/// Either a full [`SimConfig`] or a [`SimRequest`] by name.
#[derive(Debug, Clone, PartialEq)]
pub enum SimInput {
    Config(Box<SimConfig>),
    Named(SimRequest),
}

impl SimInput {
    /// A document whose `model` is an object is a full config.
    pub fn from_json(value: serde_json::Value) -> std::result::Result<Self, FieldError> {
        if value.get("model").is_some_and(|m| m.is_object()) {
            from_value(value).map(|c| SimInput::Config(Box::new(c)))
        } else {
            from_value(value).map(SimInput::Named)
        }
    }
}

pub fn simulate(cat: &Catalog, input: &SimInput) -> Result<SimReport> {
    match input {
        SimInput::Config(cfg) => run_sim(cfg),
        SimInput::Named(req) => run_sim(&req.resolve(cat)?),
    }
}

impl Tabular for SimReport {
    fn table(&self) -> String {
        let mut out = format!(
            "{} on {}  schedule {}  cycles {} (averaged {}{})\n",
            self.model,
            self.hardware,
            self.schedule.name(),
            self.n_cycles,
            self.cycles_averaged,
            if self.cold_start_excluded { ", cold start excluded" } else { "" }
        );
        let _ = writeln!(
            out,
            "mean {:.3} ms  {:.3} Hz  synchronous {:.3} ms  speedup {:.3}x",
            self.mean_latency_ms, self.frequency_hz, self.synchronous_latency_ms, self.speedup
        );
        for p in &self.breakdown {
            let util = self
                .utilization
                .iter()
                .find(|u| u.phase == p.phase)
                .map_or(String::new(), |u| format!("  util {:.3}", u.proxy));
            let _ = writeln!(out, "  {:<14} {:>10.3} ms{}", p.phase, p.latency_ms, util);
        }
        if self.ae_steps_total > 0 {
            let _ = writeln!(
                out,
                "  expert steps computed {}/{}",
                self.ae_steps_computed, self.ae_steps_total
            );
        }
        out
    }
}

/// Predicted fused speedup from explicit times or from a catalog pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedupRequest {
    #[serde(default)]
    pub t_vlm_ms: Option<f64>,
    #[serde(default)]
    pub t_ae_ms: Option<f64>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub hardware: Option<String>,
    #[serde(default)]
    pub total_steps: Option<usize>,
    pub stale_steps: usize,
    #[serde(default)]
    pub contention: ContentionChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub t_vlm_ms: f64,
    pub t_ae_ms: f64,
    pub schedule: FusionSchedule,
    pub contention: ContentionModel,
    pub baseline_ms: f64,
    pub fused_ms: f64,
    pub speedup: f64,
}

pub fn speedup(cat: &Catalog, req: &SpeedupRequest) -> Result<SpeedupReport> {
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(invalid(format!("{name} must be > 0")))
        }
    };
    let (t_vlm, t_ae, k, preset) = match (req.t_vlm_ms, req.t_ae_ms, &req.model, &req.hardware) {
        (Some(v), Some(a), None, None) => (
            positive("t_vlm_ms", v)? / 1e3,
            positive("t_ae_ms", a)? / 1e3,
            req.total_steps.unwrap_or(crate::fusion::DEFAULT_TOTAL_STEPS),
            None,
        ),
        (None, None, Some(m), Some(h)) => {
            let sim = SimRequest::new(m, h, Schedule::Synchronous).resolve(cat)?;
            let (v, a) = phase_split(&sim)?;
            let k = sim.model.action_expert().map_or(1, |p| p.invocations_per_cycle as usize);
            if req.total_steps.is_some_and(|t| t != k) {
                return Err(invalid(format!("total_steps must match the expert's {k} steps")));
            }
            (v, a, k, cat.contention_for(m, h).map(|p| p.contention))
        }
        _ => {
            return Err(invalid(
                "give either t_vlm_ms and t_ae_ms, or model and hardware",
            ))
        }
    };
    let schedule = FusionSchedule::new(k, req.stale_steps)?;
    let contention = match req.contention {
        ContentionChoice::None => ContentionModel::zero(),
        ContentionChoice::Preset => preset.unwrap_or_else(ContentionModel::zero),
        ContentionChoice::Custom(c) => {
            c.validate()?;
            c
        }
    };
    Ok(SpeedupReport {
        t_vlm_ms: t_vlm * 1e3,
        t_ae_ms: t_ae * 1e3,
        schedule,
        contention,
        baseline_ms: (t_vlm + t_ae) * 1e3,
        fused_ms: fused_latency(t_vlm, t_ae, &schedule, &contention) * 1e3,
        speedup: predicted_speedup(t_vlm, t_ae, &schedule, &contention),
    })
}

impl Tabular for SpeedupReport {
    fn table(&self) -> String {
        format!(
            "backbone {:.3} ms  expert {:.3} ms  s={} K={}\nbaseline {:.3} ms  fused {:.3} ms  speedup {:.4}x\n",
            self.t_vlm_ms,
            self.t_ae_ms,
            self.schedule.stale_steps,
            self.schedule.total_steps,
            self.baseline_ms,
            self.fused_ms,
            self.speedup
        )
    }
}

/// Deserialization failure with the path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.message)
    }
}

pub fn from_value<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> std::result::Result<T, FieldError> {
    serde_path_to_error::deserialize(v).map_err(|e| FieldError {
        field: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

pub fn from_str<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, FieldError> {
    let mut de = serde_json::Deserializer::from_str(s);
    serde_path_to_error::deserialize(&mut de).map_err(|e| FieldError {
        field: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field: Option<String>,
}

impl ErrorBody {
    pub fn of(e: &Error) -> Self {
        let (kind, field) = match e {
            Error::Unknown { .. } => ("not_found", None),
            Error::Schema { field, .. } => ("invalid", Some(field.clone())),
            Error::InvalidInput(m) | Error::InvalidConfig(m) => ("invalid", constraint_field(m)),
            Error::Calibration { .. } | Error::NonFinite { .. } => ("unprocessable", None),
            Error::Io { .. } => ("io", None),
        };
        Self {
            error: kind.into(),
            message: e.to_string(),
            field,
        }
    }

    pub fn field(e: &FieldError) -> Self {
        Self {
            error: "invalid".into(),
            message: e.message.clone(),
            field: Some(e.field.clone()),
        }
    }
}

/// `constraint.required_hz must be > 0` names its field.
fn constraint_field(msg: &str) -> Option<String> {
    let head = msg.split_whitespace().next()?;
    head.contains('.').then(|| head.to_string())
}

fn default_dp_steps() -> usize {
    100
}

fn default_period() -> usize {
    4
}

fn default_epsilon() -> f64 {
    crate::dpcache::DEFAULT_EPSILON
}

fn default_repeats() -> usize {
    5
}

/// Profile the toy policy, run it with step caching, and compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpCacheRequest {
    #[serde(default = "default_dp_steps")]
    pub total_steps: usize,
    #[serde(default = "default_period")]
    pub period: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Cache this segment instead of the profiled one.
    #[serde(default)]
    pub segment: Option<StableSegment>,
    /// Initial-noise seed of the toy sampler.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Timed repetitions; the fastest is reported.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl Default for DpCacheRequest {
    fn default() -> Self {
        Self {
            total_steps: default_dp_steps(),
            period: default_period(),
            epsilon: default_epsilon(),
            segment: None,
            seed: None,
            repeats: default_repeats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpCacheReport {
    pub total_steps: usize,
    pub epsilon: f64,
    pub profiled_segment: StableSegment,
    pub cached_segment: StableSegment,
    pub period: usize,
    pub computed_steps: usize,
    pub skipped_steps: usize,
    pub step_reduction: f64,
    pub full_ms: f64,
    pub cached_ms: f64,
    pub wall_speedup: f64,
    /// Relative L2 distance of the final action chunk.
    pub deviation: f64,
    /// L1_rel between consecutive network outputs of the full run.
    pub l1_rel_series: Vec<f64>,
}

fn fastest<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let t = std::time::Instant::now();
        let v = f()?;
        best = best.min(t.elapsed().as_secs_f64());
        out = Some(v);
    }
    Ok((out.expect("at least one run"), best))
}

pub fn dpcache(req: &DpCacheRequest) -> Result<DpCacheReport> {
    if !(req.epsilon.is_finite() && req.epsilon >= 0.0) {
        return Err(invalid("epsilon must be >= 0"));
    }
    let mut toy = ToyPolicy::with_steps(req.total_steps)?;
    if let Some(seed) = req.seed {
        toy.noise_seed = seed;
    }
    let profile_run = toy.full(true)?;
    let profiled = profile_stability(&profile_run, req.epsilon)?;
    let l1_rel_series = l1_rel_series(&profile_run, Signal::ModelOutput)?;
    let segment = req.segment.unwrap_or(profiled);
    let cfg = CacheConfig::new(req.period, segment);
    cfg.validate(req.total_steps)?;
    let (full, full_s) = fastest(req.repeats, || toy.full(false))?;
    let (cached, cached_s) = fastest(req.repeats, || toy.cached(&cfg))?;
    Ok(DpCacheReport {
        total_steps: req.total_steps,
        epsilon: req.epsilon,
        profiled_segment: profiled,
        cached_segment: segment,
        period: req.period,
        computed_steps: cached.stats.computed_steps,
        skipped_steps: cached.stats.skipped_steps,
        step_reduction: cached.stats.step_reduction(),
        full_ms: full_s * 1e3,
        cached_ms: cached_s * 1e3,
        wall_speedup: full_s / cached_s,
        deviation: deviation(&full, &cached),
        l1_rel_series,
    })
}

impl Tabular for DpCacheReport {
    fn table(&self) -> String {
        format!(
            "T {}  epsilon {}  profiled segment [{}, {})  cached segment [{}, {})  S {}\n\
             computed {}  skipped {}  step ratio {:.3}x\n\
             full {:.3} ms  cached {:.3} ms  wall-clock {:.3}x  deviation {:.3e}\n",
            self.total_steps,
            self.epsilon,
            self.profiled_segment.start,
            self.profiled_segment.end,
            self.cached_segment.start,
            self.cached_segment.end,
            self.period,
            self.computed_steps,
            self.skipped_steps,
            self.step_reduction,
            self.full_ms,
            self.cached_ms,
            self.wall_speedup,
            self.deviation
        )
    }
}

fn default_fuse_cycles() -> usize {
    20
}

fn default_delta() -> f64 {
    0.05
}

fn default_pace() -> Option<f64> {
    Some(20.0)
}

/// Run the two-worker toy pipeline against the synchronous loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuseRequest {
    #[serde(default = "default_fuse_cycles")]
    pub cycles: usize,
    #[serde(default)]
    pub schedule: FusionSchedule,
    #[serde(default = "yes")]
    pub two_workers: bool,
    /// Modeled backbone time per cycle; the expert gets twice that. `None`
    /// runs unpaced on the host CPU only.
    #[serde(default = "default_pace")]
    pub backbone_ms: Option<f64>,
    /// Per-cycle observation drift.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FuseRequest {
    fn default() -> Self {
        Self {
            cycles: default_fuse_cycles(),
            schedule: FusionSchedule::default(),
            two_workers: true,
            backbone_ms: default_pace(),
            delta: default_delta(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseReport {
    pub cycles: usize,
    pub schedule: FusionSchedule,
    pub workers: usize,
    pub backbone_ms: Option<f64>,
    /// Steady-state means; cycle 0 excluded.
    pub synchronous_cycle_ms: f64,
    pub fused_cycle_ms: f64,
    pub speedup: f64,
    pub ordering_safe: bool,
    /// Largest relative L2 distance between fused and synchronous actions.
    pub max_action_deviation: f64,
    pub feature_similarity: SimilarityReport,
    pub events: EventLog,
}

pub fn fuse(req: &FuseRequest) -> Result<FuseReport> {
    if req.cycles < 2 {
        return Err(invalid("cycles must be >= 2"));
    }
    if !(req.delta.is_finite() && req.delta >= 0.0) {
        return Err(invalid("delta must be >= 0"));
    }
    let pacing = match req.backbone_ms {
        Some(ms) if ms.is_finite() && ms > 0.0 => {
            Pacing::one_to_two(std::time::Duration::from_secs_f64(ms / 1e3), req.schedule.total_steps)
        }
        Some(_) => return Err(invalid("backbone_ms must be > 0")),
        None => Pacing::Compute,
    };
    let vla = ToyVla::reference(req.schedule.total_steps, pacing)?;
    let observations: Vec<_> = ObservationStream::new(ToyVla::OBS_DIM, req.delta, req.seed)
        .take(req.cycles)
        .collect();
    let workers = if req.two_workers { Workers::Two } else { Workers::Single };
    let bench = benchmark_fusion(&vla, &observations, &req.schedule, workers)?;
    let ordering_safe = bench
        .fused_traces
        .iter()
        .all(|t| t.ordering_safe(req.schedule.stale_steps) && t.workers_consistent());
    let max_action_deviation = bench
        .fused_traces
        .iter()
        .zip(&bench.sync_traces)
        .map(|(f, s)| {
            let diff: f64 = f.action.iter().zip(&s.action).map(|(a, b)| (a - b).powi(2)).sum();
            let norm: f64 = s.action.iter().map(|a| a * a).sum();
            (diff / norm).sqrt()
        })
        .fold(0.0, f64::max);
    let feature_similarity = staleness_similarity_report(
        &vla.vlm,
        observations.iter().cloned(),
        observations.len(),
    )?;
    let steady = (req.cycles - 1) as f64;
    Ok(FuseReport {
        cycles: req.cycles,
        schedule: req.schedule,
        workers: if req.two_workers { 2 } else { 1 },
        backbone_ms: req.backbone_ms,
        synchronous_cycle_ms: bench.synchronous_s / steady * 1e3,
        fused_cycle_ms: bench.fused_s / steady * 1e3,
        speedup: bench.speedup,
        ordering_safe,
        max_action_deviation,
        feature_similarity,
        events: event_log(&bench.fused_traces),
    })
}

impl Tabular for FuseReport {
    fn table(&self) -> String {
        format!(
            "cycles {}  s {} of K {}  workers {}  backbone {}\n\
             synchronous {:.3} ms/cycle  fused {:.3} ms/cycle  speedup {:.3}x\n\
             ordering safe {}  max action deviation {:.3e}\n\
             adjacent feature cosine {:.4} +/- {:.4} (min {:.4})\n",
            self.cycles,
            self.schedule.stale_steps,
            self.schedule.total_steps,
            self.workers,
            self.backbone_ms.map_or("unpaced".to_string(), |m| format!("{m} ms")),
            self.synchronous_cycle_ms,
            self.fused_cycle_ms,
            self.speedup,
            self.ordering_safe,
            self.max_action_deviation,
            self.feature_similarity.mean,
            self.feature_similarity.stddev,
            self.feature_similarity.min
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub source: String,
    pub samples: usize,
    pub duration_s: f64,
    pub mean_power_w: f64,
    pub energy_kj: f64,
}

pub fn energy(trace: &[PowerSample], source: &str) -> Result<EnergyReport> {
    let energy_kj = energy_from_power_trace(trace)?;
    let duration_s = trace[trace.len() - 1].t_s - trace[0].t_s;
    Ok(EnergyReport {
        source: source.to_string(),
        samples: trace.len(),
        duration_s,
        mean_power_w: energy_kj * 1e3 / duration_s,
        energy_kj,
    })
}

impl Tabular for EnergyReport {
    fn table(&self) -> String {
        format!(
            "{}: {} samples over {:.3} s, mean {:.2} W, energy {:.6} kJ\n",
            self.source, self.samples, self.duration_s, self.mean_power_w, self.energy_kj
        )
    }
}
