//! Overlapping the VLM backbone with the first denoising steps of the action
//! expert.
//!
//! Consecutive observations are nearly identical, so the action expert can
//! start its first `s` denoising steps on the previous cycle's features while
//! the backbone encodes the current observation. Once the fresh features are
//! published the expert switches over for the remaining `K - s` steps.
//!
//! The toy pipeline here runs two real worker threads connected by a
//! single-producer/single-consumer channel. Phases can optionally be paced to
//! a modeled accelerator time ([`Pacing::Device`]); the host thread then
//! blocks the way it would while waiting on a device kernel, which lets the
//! overlap show up in wall-clock time even on a single-core host.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use crate::dpcache::{initial_noise, DenoiserNet, NetShape, NoiseSchedule, Sampler};
use crate::error::{invalid, Error, Result};
use crate::events::{Event, EventLog, PhaseKind};

pub const DEFAULT_TOTAL_STEPS: usize = 10;
pub const DEFAULT_STALE_STEPS: usize = 5;

/// Backbone features carried from one cycle to the next (stand-in for the
/// KV cache).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub features: Vec<f64>,
    pub source_cycle: u64,
    /// Cycles since the features were produced.
    pub staleness: u32,
}

impl FeatureCache {
    pub fn fresh(features: Vec<f64>, cycle: u64) -> Self {
        Self {
            features,
            source_cycle: cycle,
            staleness: 0,
        }
    }

    /// The same features, one cycle older.
    pub fn aged(&self) -> Self {
        Self {
            staleness: self.staleness + 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionSchedule {
    pub total_steps: usize,
    pub stale_steps: usize,
}

impl Default for FusionSchedule {
    fn default() -> Self {
        Self {
            total_steps: DEFAULT_TOTAL_STEPS,
            stale_steps: DEFAULT_STALE_STEPS,
        }
    }
}

impl FusionSchedule {
    pub fn new(total_steps: usize, stale_steps: usize) -> Result<Self> {
        let s = Self {
            total_steps,
            stale_steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::InvalidConfig("fusion total_steps must be >= 1".into()));
        }
        if self.stale_steps > self.total_steps {
            return Err(Error::InvalidConfig(format!(
                "stale_steps {} exceeds total_steps {}",
                self.stale_steps, self.total_steps
            )));
        }
        Ok(())
    }

    pub fn stale_fraction(&self) -> f64 {
        self.stale_steps as f64 / self.total_steps as f64
    }
}

/// Demand each phase places on the two roofline resources while the phases
/// overlap. Capacity of each resource is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentionModel {
    pub vlm_compute: f64,
    pub vlm_bandwidth: f64,
    pub ae_compute: f64,
    pub ae_bandwidth: f64,
}

impl ContentionModel {
    pub fn zero() -> Self {
        Self {
            vlm_compute: 0.0,
            vlm_bandwidth: 0.0,
            ae_compute: 0.0,
            ae_bandwidth: 0.0,
        }
    }

    /// One-parameter family: the backbone saturates compute, the expert
    /// saturates bandwidth, and each spills `level` onto the other's
    /// resource. `level = 0` never inflates, `level = 1` doubles both.
    pub fn level(level: f64) -> Self {
        Self {
            vlm_compute: 1.0,
            vlm_bandwidth: level,
            ae_compute: level,
            ae_bandwidth: 1.0,
        }
    }

    pub fn full() -> Self {
        Self::level(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vlm_compute", self.vlm_compute),
            ("vlm_bandwidth", self.vlm_bandwidth),
            ("ae_compute", self.ae_compute),
            ("ae_bandwidth", self.ae_bandwidth),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("contention.{name} must be within [0, 1]")));
            }
        }
        Ok(())
    }

    /// Slowdown factors `(backbone, expert)` while overlapped. The backbone
    /// is compute-bound and the expert bandwidth-bound, so each is slowed by
    /// the oversubscription of its own binding resource.
    pub fn inflation(&self) -> (f64, f64) {
        let compute = (self.vlm_compute + self.ae_compute).max(1.0);
        let bandwidth = (self.vlm_bandwidth + self.ae_bandwidth).max(1.0);
        (compute, bandwidth)
    }

    /// Bisect [`ContentionModel::level`] so that [`predicted_speedup`] hits
    /// `target`. Targets at or below 1 give full contention; targets above
    /// the contention-free speedup are rejected.
    pub fn calibrate(t_vlm: f64, t_ae: f64, sched: &FusionSchedule, target: f64) -> Result<Self> {
        let at = |level: f64| predicted_speedup(t_vlm, t_ae, sched, &Self::level(level));
        if target <= 1.0 {
            return Ok(Self::full());
        }
        let ceiling = at(0.0);
        if target > ceiling {
            return Err(invalid(format!(
                "target speedup {target:.3} exceeds the contention-free speedup {ceiling:.3}"
            )));
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if at(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self::level(0.5 * (lo + hi)))
    }
}

/// Cycle latency of the fused schedule. Falls back to the sequential
/// latency when contention would make overlap slower.
pub fn fused_latency(t_vlm: f64, t_ae: f64, sched: &FusionSchedule, cm: &ContentionModel) -> f64 {
    let sequential = t_vlm + t_ae;
    let (infl_v, infl_a) = cm.inflation();
    let stale = sched.stale_fraction() * t_ae;
    let overlapped = (t_vlm * infl_v).max(stale * infl_a);
    (overlapped + (t_ae - stale)).min(sequential)
}

/// Baseline over fused latency; never below 1.
pub fn predicted_speedup(t_vlm: f64, t_ae: f64, sched: &FusionSchedule, cm: &ContentionModel) -> f64 {
    (t_vlm + t_ae) / fused_latency(t_vlm, t_ae, sched, cm)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid(format!("dimension mismatch {} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(invalid("cosine similarity of a zero vector"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Observation encoder standing in for the vision + VLM backbone.
#[derive(Debug, Clone)]
pub struct ToyVlm {
    obs_dim: usize,
    feat_dim: usize,
    layers: Vec<Vec<f64>>,
}

impl ToyVlm {
    /// `depth` layers of width `feat_dim` with tanh activations. The first
    /// layer plays the vision encoder.
    pub fn new(obs_dim: usize, feat_dim: usize, depth: usize, seed: u64) -> Result<Self> {
        if obs_dim == 0 || feat_dim == 0 || depth < 2 {
            return Err(invalid("toy backbone needs positive widths and depth >= 2"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..depth)
            .map(|i| {
                let fan_in = if i == 0 { obs_dim } else { feat_dim };
                let scale = 1.5 / (fan_in as f64).sqrt();
                (0..fan_in * feat_dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * scale
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            obs_dim,
            feat_dim,
            layers,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn encode(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encode_backbone(&self.encode_vision(obs)?))
    }

    /// First layer only: the vision encoder.
    pub fn encode_vision(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.obs_dim {
            return Err(invalid(format!(
                "observation has {} values, backbone expects {}",
                obs.len(),
                self.obs_dim
            )));
        }
        Ok(self.apply(obs.to_vec(), &self.layers[..1]))
    }

    /// Remaining layers, applied to vision tokens.
    pub fn encode_backbone(&self, tokens: &[f64]) -> Vec<f64> {
        self.apply(tokens.to_vec(), &self.layers[1..])
    }

    fn apply(&self, mut h: Vec<f64>, layers: &[Vec<f64>]) -> Vec<f64> {
        for w in layers {
            let n_in = h.len();
            h = (0..self.feat_dim)
                .map(|j| {
                    w[j * n_in..(j + 1) * n_in]
                        .iter()
                        .zip(&h)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        .tanh()
                })
                .collect();
        }
        h
    }
}

/// Slowly varying synthetic observations: a fixed base plus a
/// mean-reverting perturbation `w_t = 0.9 w_{t-1} + delta * n_t`.
#[derive(Debug, Clone)]
pub struct ObservationStream {
    base: Vec<f64>,
    drift: Vec<f64>,
    delta: f64,
    rng: ChaCha8Rng,
}

impl ObservationStream {
    const REVERSION: f64 = 0.9;

    pub fn new(dim: usize, delta: f64, seed: u64) -> Self {
        Self {
            base: initial_noise(dim, seed),
            drift: vec![0.0; dim],
            delta,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9)),
        }
    }

    /// Every observation identical to the first.
    pub fn constant(dim: usize, seed: u64) -> Self {
        Self::new(dim, 0.0, seed)
    }
}

impl Iterator for ObservationStream {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let obs = self.base.iter().zip(&self.drift).map(|(b, w)| b + w).collect();
        for w in &mut self.drift {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *w = Self::REVERSION * *w + self.delta * z;
        }
        Some(obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub cycles: usize,
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
}

/// Mean and spread of adjacent-cycle cosine similarity of backbone features.
pub fn staleness_similarity_report(
    vlm: &ToyVlm,
    stream: impl Iterator<Item = Vec<f64>>,
    n_cycles: usize,
) -> Result<SimilarityReport> {
    if n_cycles < 2 {
        return Err(invalid("similarity report needs at least 2 cycles"));
    }
    let feats = stream
        .take(n_cycles)
        .map(|o| vlm.encode(&o))
        .collect::<Result<Vec<_>>>()?;
    if feats.len() < n_cycles {
        return Err(invalid("observation stream ended early"));
    }
    let sims = feats
        .windows(2)
        .map(|w| cosine_similarity(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    let n = sims.len() as f64;
    let mean = sims.iter().sum::<f64>() / n;
    let var = sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(SimilarityReport {
        cycles: n_cycles,
        mean,
        stddev: var.sqrt(),
        min: sims.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// One contiguous stretch of work on one worker. Times are seconds from the
/// start of the cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub worker: usize,
    pub phase: PhaseKind,
    pub start: f64,
    pub end: f64,
    /// Cycles of staleness of the features the phase consumed.
    pub staleness: u32,
    /// Compute-time fraction of the span (the rest is device wait).
    pub utilization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSpan {
    pub step: usize,
    pub start: f64,
    pub end: f64,
    pub staleness: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub cycle: u64,
    pub fused: bool,
    pub phases: Vec<PhaseSpan>,
    pub steps: Vec<StepSpan>,
    /// When the current cycle's features became available.
    pub vlm_done: f64,
    pub total: f64,
    pub action: Vec<f64>,
}

impl CycleTrace {
    /// No denoising step at or beyond `stale_steps` starts before the
    /// backbone finished, and fresh steps consume staleness-0 features.
    pub fn ordering_safe(&self, stale_steps: usize) -> bool {
        self.steps.iter().all(|s| {
            if s.step >= stale_steps || !self.fused {
                s.start >= self.vlm_done && s.staleness == 0
            } else {
                true
            }
        })
    }

    /// Per-worker spans are time-ordered and non-overlapping.
    pub fn workers_consistent(&self) -> bool {
        let mut by_worker: Vec<Vec<&PhaseSpan>> = Vec::new();
        for p in &self.phases {
            if by_worker.len() <= p.worker {
                by_worker.resize(p.worker + 1, Vec::new());
            }
            by_worker[p.worker].push(p);
        }
        by_worker.iter().all(|spans| {
            spans.iter().all(|p| p.start <= p.end)
                && spans.windows(2).all(|w| w[0].end <= w[1].start)
        })
    }

    /// Event records for this cycle, shifted by `offset_s` seconds.
    pub fn events(&self, offset_s: f64) -> Vec<Event> {
        self.phases
            .iter()
            .filter(|p| p.end > p.start)
            .map(|p| Event {
                cycle: self.cycle,
                worker: p.worker,
                phase: p.phase,
                start_us: (offset_s + p.start) * 1e6,
                end_us: (offset_s + p.end) * 1e6,
                staleness: p.staleness,
            })
            .collect()
    }

    /// Total time the two workers ran concurrently.
    pub fn overlap(&self) -> f64 {
        let mut total = 0.0;
        for a in self.phases.iter().filter(|p| p.worker == 0) {
            for b in self.phases.iter().filter(|p| p.worker == 1) {
                total += (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
            }
        }
        total
    }
}

/// How long each phase occupies its worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Only the host computation; no modeled device time.
    Compute,
    /// Each phase holds its worker for at least the given device time.
    Device {
        vision: Duration,
        vlm: Duration,
        ae_step: Duration,
    },
}

impl Pacing {
    /// Device pacing with a 1:2 ratio between the backbone (vision
    /// included) and the whole expert. Vision takes a tenth of the backbone.
    pub fn one_to_two(backbone: Duration, total_steps: usize) -> Self {
        let vision = backbone / 10;
        Pacing::Device {
            vision,
            vlm: backbone - vision,
            ae_step: backbone * 2 / total_steps.max(1) as u32,
        }
    }

    fn vision(self) -> Option<Duration> {
        match self {
            Pacing::Compute => None,
            Pacing::Device { vision, .. } => Some(vision),
        }
    }

    fn vlm(self) -> Option<Duration> {
        match self {
            Pacing::Compute => None,
            Pacing::Device { vlm, .. } => Some(vlm),
        }
    }

    fn ae_step(self) -> Option<Duration> {
        match self {
            Pacing::Compute => None,
            Pacing::Device { ae_step, .. } => Some(ae_step),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workers {
    /// Backbone and expert on separate threads.
    Two,
    /// Degraded mode: stale steps, then the backbone, then fresh steps, all
    /// on the calling thread. Deterministic timing order, no speedup.
    Single,
}

/// Backbone plus action expert.
#[derive(Debug, Clone)]
pub struct ToyVla {
    pub vlm: ToyVlm,
    pub expert: DenoiserNet,
    pub schedule: NoiseSchedule,
    pub pacing: Pacing,
    pub noise_seed: u64,
}

#[derive(Clone, Copy)]
struct Clock {
    origin: Instant,
}

/// `(start, end, utilization)` of one paced stretch.
type Span = (f64, f64, f64);

impl Clock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    /// Run `f`, then hold until at least `min` has passed since the start.
    fn paced<T>(&self, min: Option<Duration>, f: impl FnOnce() -> T) -> (T, Span) {
        let start = self.now();
        let out = f();
        let computed = self.now() - start;
        if let Some(min) = min {
            let left = start + min.as_secs_f64() - self.now();
            if left > 0.0 {
                thread::sleep(Duration::from_secs_f64(left));
            }
        }
        let end = self.now();
        let util = if end > start { (computed / (end - start)).min(1.0) } else { 1.0 };
        (out, (start, end, util))
    }
}

struct BackboneOut {
    features: Vec<f64>,
    vision: Span,
    vlm: Span,
}

impl ToyVla {
    pub const OBS_DIM: usize = 64;
    pub const FEAT_DIM: usize = 32;

    /// The reference toy: 64-dim observations, a 4-layer backbone with
    /// 32-dim features, and the step-caching toy's expert with `K` steps.
    pub fn reference(total_steps: usize, pacing: Pacing) -> Result<Self> {
        let shape = NetShape {
            cond_dim: Self::FEAT_DIM,
            ..NetShape::default()
        };
        Ok(Self {
            vlm: ToyVlm::new(Self::OBS_DIM, Self::FEAT_DIM, 4, 11)?,
            expert: DenoiserNet::new(shape, 0)?,
            schedule: NoiseSchedule::linear(total_steps)?,
            pacing,
            noise_seed: 1,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.schedule.total_steps()
    }

    fn cycle_seed(&self, cycle: u64) -> u64 {
        self.noise_seed.wrapping_add(cycle)
    }

    fn backbone(&self, clock: &Clock, obs: &[f64]) -> Result<BackboneOut> {
        let (tokens, vision) = clock.paced(self.pacing.vision(), || self.vlm.encode_vision(obs));
        let tokens = tokens?;
        let (features, vlm) = clock.paced(self.pacing.vlm(), || self.vlm.encode_backbone(&tokens));
        Ok(BackboneOut {
            features,
            vision,
            vlm,
        })
    }

    /// Run `count` denoising steps on `cond`, recording a span per step.
    fn run_steps(
        &self,
        clock: &Clock,
        sampler: &mut Sampler<'_>,
        cond: &[f64],
        count: usize,
        staleness: u32,
        steps: &mut Vec<StepSpan>,
    ) -> Result<Span> {
        let first = clock.now();
        let mut busy = 0.0;
        for _ in 0..count {
            let step = sampler.completed();
            let (res, (start, end, util)) = clock.paced(self.pacing.ae_step(), || sampler.step(cond));
            res?;
            busy += util * (end - start);
            steps.push(StepSpan {
                step,
                start,
                end,
                staleness,
            });
        }
        let last = clock.now();
        let util = if last > first { (busy / (last - first)).min(1.0) } else { 1.0 };
        Ok((first, last, util))
    }

    fn span(worker: usize, phase: PhaseKind, staleness: u32, s: Span) -> PhaseSpan {
        PhaseSpan {
            worker,
            phase,
            start: s.0,
            end: s.1,
            staleness,
            utilization: s.2,
        }
    }

    /// Vision, backbone, then all `K` expert steps on one worker.
    pub fn synchronous_cycle(&self, cycle: u64, obs: &[f64]) -> Result<(Vec<f64>, CycleTrace)> {
        let clock = Clock {
            origin: Instant::now(),
        };
        let bb = self.backbone(&clock, obs)?;
        let mut sampler = Sampler::new(&self.expert, &self.schedule, self.cycle_seed(cycle));
        let mut steps = Vec::new();
        let ae = self.run_steps(&clock, &mut sampler, &bb.features, self.total_steps(), 0, &mut steps)?;
        let action = sampler.finish();
        let trace = CycleTrace {
            cycle,
            fused: false,
            phases: vec![
                Self::span(0, PhaseKind::Vision, 0, bb.vision),
                Self::span(0, PhaseKind::Vlm, 0, bb.vlm),
                Self::span(0, PhaseKind::Ae, 0, ae),
            ],
            steps,
            vlm_done: bb.vlm.1,
            total: clock.now(),
            action: action.clone(),
        };
        Ok((action, trace))
    }

    /// One pipelined cycle. Without a previous cache (cold start) this is a
    /// synchronous cycle.
    pub fn fused_cycle(
        &self,
        cycle: u64,
        obs: &[f64],
        cache_prev: Option<&FeatureCache>,
        sched: &FusionSchedule,
        workers: Workers,
    ) -> Result<(Vec<f64>, CycleTrace, FeatureCache)> {
        sched.validate()?;
        if sched.total_steps != self.total_steps() {
            return Err(Error::InvalidConfig(format!(
                "fusion schedule has {} steps, expert runs {}",
                sched.total_steps,
                self.total_steps()
            )));
        }
        let Some(prev) = cache_prev else {
            let (action, trace) = self.synchronous_cycle(cycle, obs)?;
            let feats = self.vlm.encode(obs)?;
            return Ok((action, trace, FeatureCache::fresh(feats, cycle)));
        };
        if prev.staleness != 1 {
            return Err(invalid(format!(
                "stale cache must be exactly one cycle old, got staleness {}",
                prev.staleness
            )));
        }
        if prev.features.len() != self.vlm.feat_dim() {
            return Err(invalid("stale cache has the wrong feature width"));
        }

        let clock = Clock {
            origin: Instant::now(),
        };
        let s = sched.stale_steps;
        let rest = sched.total_steps - s;
        let mut sampler = Sampler::new(&self.expert, &self.schedule, self.cycle_seed(cycle));
        let mut steps = Vec::new();

        let (bb, stale_span, fresh_span) = match workers {
            Workers::Two => {
                let (tx, rx) = mpsc::sync_channel::<Vec<f64>>(1);
                thread::scope(|scope| -> Result<_> {
                    let clock = &clock;
                    let backbone = scope.spawn(move || {
                        let out = self.backbone(clock, obs);
                        if let Ok(bb) = &out {
                            // Completion signal. The expert may already have
                            // failed and hung up, which join reports below.
                            let _ = tx.send(bb.features.clone());
                        }
                        out
                    });
                    let stale =
                        self.run_steps(clock, &mut sampler, &prev.features, s, 1, &mut steps);
                    let fresh = rx.recv();
                    let bb = backbone
                        .join()
                        .map_err(|_| invalid("backbone worker panicked"))??;
                    let stale = stale?;
                    let fresh = fresh.map_err(|_| invalid("backbone worker ended without features"))?;
                    let fresh_span = self.run_steps(clock, &mut sampler, &fresh, rest, 0, &mut steps)?;
                    Ok((bb, stale, fresh_span))
                })?
            }
            Workers::Single => {
                let stale = self.run_steps(&clock, &mut sampler, &prev.features, s, 1, &mut steps)?;
                let bb = self.backbone(&clock, obs)?;
                let fresh = self.run_steps(&clock, &mut sampler, &bb.features, rest, 0, &mut steps)?;
                (bb, stale, fresh)
            }
        };
        let action = sampler.finish();

        let expert = match workers {
            Workers::Two => 1,
            Workers::Single => 0,
        };
        let mut phases = vec![
            Self::span(0, PhaseKind::Vision, 0, bb.vision),
            Self::span(0, PhaseKind::Vlm, 0, bb.vlm),
        ];
        if s > 0 {
            phases.push(Self::span(expert, PhaseKind::AeStale, 1, stale_span));
        }
        if rest > 0 {
            phases.push(Self::span(expert, PhaseKind::AeFresh, 0, fresh_span));
        }
        phases.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.worker.cmp(&b.worker)));

        let trace = CycleTrace {
            cycle,
            fused: true,
            phases,
            steps,
            vlm_done: bb.vlm.1,
            total: clock.now(),
            action: action.clone(),
        };
        Ok((action, trace, FeatureCache::fresh(bb.features, cycle)))
    }
}

/// Drives fused cycles back to back, carrying the feature cache.
#[derive(Debug)]
pub struct FusedPipeline<'a> {
    vla: &'a ToyVla,
    sched: FusionSchedule,
    workers: Workers,
    cache: Option<FeatureCache>,
    cycle: u64,
}

impl<'a> FusedPipeline<'a> {
    pub fn new(vla: &'a ToyVla, sched: FusionSchedule, workers: Workers) -> Result<Self> {
        sched.validate()?;
        Ok(Self {
            vla,
            sched,
            workers,
            cache: None,
            cycle: 0,
        })
    }

    pub fn run_cycle(&mut self, obs: &[f64]) -> Result<(Vec<f64>, CycleTrace)> {
        let prev = self.cache.as_ref().map(FeatureCache::aged);
        let (action, trace, cache) =
            self.vla
                .fused_cycle(self.cycle, obs, prev.as_ref(), &self.sched, self.workers)?;
        self.cache = Some(cache);
        self.cycle += 1;
        Ok((action, trace))
    }
}

/// Lay traces end to end on one timeline.
pub fn event_log(traces: &[CycleTrace]) -> EventLog {
    let mut log = EventLog::new();
    let mut offset = 0.0;
    for t in traces {
        log.events.extend(t.events(offset));
        offset += t.total;
    }
    log
}

#[derive(Debug, Clone, Serialize)]
pub struct FusionBenchmark {
    pub cycles: usize,
    pub synchronous_s: f64,
    /// Excludes the cold-start cycle.
    pub fused_s: f64,
    pub speedup: f64,
    pub sync_traces: Vec<CycleTrace>,
    pub fused_traces: Vec<CycleTrace>,
}

/// Wall-clock comparison over the same observations. Averages exclude cycle
/// 0, which is synchronous in both runs.
pub fn benchmark_fusion(
    vla: &ToyVla,
    observations: &[Vec<f64>],
    sched: &FusionSchedule,
    workers: Workers,
) -> Result<FusionBenchmark> {
    if observations.len() < 2 {
        return Err(invalid("benchmark needs at least 2 cycles"));
    }
    let mut sync_traces = Vec::with_capacity(observations.len());
    for (i, obs) in observations.iter().enumerate() {
        sync_traces.push(vla.synchronous_cycle(i as u64, obs)?.1);
    }
    let mut pipeline = FusedPipeline::new(vla, *sched, workers)?;
    let mut fused_traces = Vec::with_capacity(observations.len());
    for obs in observations {
        fused_traces.push(pipeline.run_cycle(obs)?.1);
    }
    let sum = |t: &[CycleTrace]| t[1..].iter().map(|c| c.total).sum::<f64>();
    let (synchronous_s, fused_s) = (sum(&sync_traces), sum(&fused_traces));
    Ok(FusionBenchmark {
        cycles: observations.len(),
        synchronous_s,
        fused_s,
        speedup: synchronous_s / fused_s,
        sync_traces,
        fused_traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(k: usize) -> ToyVla {
        ToyVla::reference(k, Pacing::Compute).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn closed_form_speedup() {
        let sched = FusionSchedule::new(10, 5).unwrap();
        assert_eq!(predicted_speedup(1.0, 2.0, &sched, &ContentionModel::zero()), 1.5);
        let none = FusionSchedule::new(10, 0).unwrap();
        assert_eq!(predicted_speedup(1.0, 2.0, &none, &ContentionModel::level(0.3)), 1.0);
        assert_eq!(predicted_speedup(1.0, 2.0, &sched, &ContentionModel::full()), 1.0);
        assert_eq!(predicted_speedup(1.0, 2.0, &sched, &ContentionModel::level(0.0)), 1.5);
    }

    #[test]
    fn calibration_hits_target() {
        let sched = FusionSchedule::default();
        let cm = ContentionModel::calibrate(1.0, 2.0, &sched, 1.32).unwrap();
        assert!((predicted_speedup(1.0, 2.0, &sched, &cm) - 1.32).abs() < 1e-9);
        assert_eq!(ContentionModel::calibrate(1.0, 2.0, &sched, 1.0).unwrap(), ContentionModel::full());
        assert!(ContentionModel::calibrate(1.0, 2.0, &sched, 1.6).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(FusionSchedule::new(10, 11).is_err());
        assert!(FusionSchedule::new(0, 0).is_err());
        assert!(FusionSchedule::new(10, 10).is_ok());
    }

    #[test]
    fn zero_stale_steps_match_synchronous() {
        let vla = toy(10);
        let mut stream = ObservationStream::new(ToyVla::OBS_DIM, 0.2, 3);
        let (o0, o1) = (stream.next().unwrap(), stream.next().unwrap());
        let prev = FeatureCache::fresh(vla.vlm.encode(&o0).unwrap(), 0).aged();
        let sched = FusionSchedule::new(10, 0).unwrap();
        let (fused, trace, _) = vla.fused_cycle(1, &o1, Some(&prev), &sched, Workers::Two).unwrap();
        let (sync, _) = vla.synchronous_cycle(1, &o1).unwrap();
        assert_eq!(fused, sync);
        assert!(trace.ordering_safe(0));
    }

    #[test]
    fn stale_features_change_the_action() {
        let vla = toy(10);
        let mut stream = ObservationStream::new(ToyVla::OBS_DIM, 0.5, 3);
        let (o0, o1) = (stream.next().unwrap(), stream.next().unwrap());
        let prev = FeatureCache::fresh(vla.vlm.encode(&o0).unwrap(), 0).aged();
        let sched = FusionSchedule::default();
        let (fused, _, cache) = vla.fused_cycle(1, &o1, Some(&prev), &sched, Workers::Single).unwrap();
        let (sync, _) = vla.synchronous_cycle(1, &o1).unwrap();
        assert_ne!(fused, sync);
        assert_eq!(cache.staleness, 0);
        assert_eq!(cache.source_cycle, 1);
    }

    #[test]
    fn single_and_two_workers_agree() {
        let vla = toy(10);
        let obs: Vec<_> = ObservationStream::new(ToyVla::OBS_DIM, 0.1, 9).take(4).collect();
        let sched = FusionSchedule::default();
        let mut a = FusedPipeline::new(&vla, sched, Workers::Two).unwrap();
        let mut b = FusedPipeline::new(&vla, sched, Workers::Single).unwrap();
        for o in &obs {
            let (x, tx) = a.run_cycle(o).unwrap();
            let (y, ty) = b.run_cycle(o).unwrap();
            assert_eq!(x, y);
            assert!(tx.ordering_safe(sched.stale_steps));
            assert!(ty.ordering_safe(sched.stale_steps));
            assert!(tx.workers_consistent() && ty.workers_consistent());
        }
    }

    #[test]
    fn identical_observations_are_bit_identical_for_every_s() {
        let vla = toy(10);
        let obs = ObservationStream::constant(ToyVla::OBS_DIM, 4).next().unwrap();
        let prev = FeatureCache::fresh(vla.vlm.encode(&obs).unwrap(), 0).aged();
        let (sync, _) = vla.synchronous_cycle(1, &obs).unwrap();
        for s in 0..=10 {
            let sched = FusionSchedule::new(10, s).unwrap();
            for workers in [Workers::Two, Workers::Single] {
                let (fused, trace, _) = vla.fused_cycle(1, &obs, Some(&prev), &sched, workers).unwrap();
                assert_eq!(fused, sync, "s = {s}");
                assert!(trace.ordering_safe(s));
            }
        }
    }

    #[test]
    fn paced_trace_overlaps_and_logs() {
        let vla = ToyVla::reference(10, Pacing::one_to_two(Duration::from_millis(10), 10)).unwrap();
        let obs: Vec<_> = ObservationStream::new(ToyVla::OBS_DIM, 0.05, 2).take(3).collect();
        let mut p = FusedPipeline::new(&vla, FusionSchedule::default(), Workers::Two).unwrap();
        let traces: Vec<_> = obs.iter().map(|o| p.run_cycle(o).unwrap().1).collect();
        assert_eq!(traces[0].overlap(), 0.0);
        assert!(traces[1].overlap() > 0.0);
        let log = event_log(&traces);
        log.validate().unwrap();
        assert_eq!(log.len(), 3 + 4 + 4);
    }

    #[test]
    fn cold_start_and_staleness_checks() {
        let vla = toy(10);
        let obs = ObservationStream::constant(ToyVla::OBS_DIM, 1).next().unwrap();
        let sched = FusionSchedule::default();
        let (_, trace, cache) = vla.fused_cycle(0, &obs, None, &sched, Workers::Two).unwrap();
        assert!(!trace.fused);
        assert!(vla.fused_cycle(1, &obs, Some(&cache), &sched, Workers::Two).is_err());
        let too_old = cache.aged().aged();
        assert!(vla.fused_cycle(2, &obs, Some(&too_old), &sched, Workers::Two).is_err());
        let wrong_k = FusionSchedule::new(8, 4).unwrap();
        assert!(vla.fused_cycle(1, &obs, Some(&cache.aged()), &wrong_k, Workers::Two).is_err());
    }

    #[test]
    fn similarity_of_constant_stream() {
        let vla = toy(4);
        let r = staleness_similarity_report(&vla.vlm, ObservationStream::constant(64, 2), 10).unwrap();
        assert!((r.mean - 1.0).abs() < 1e-12);
        assert!(r.stddev < 1e-12);
        assert!(staleness_similarity_report(&vla.vlm, ObservationStream::constant(64, 2), 1).is_err());
    }
}
