//! Diffusion-policy step caching.
//!
//! A small deterministic diffusion policy (a two-layer perceptron sample
//! predictor driven by a DDIM sampler with `eta = 0`) together with the
//! caching mechanism: profile how much the network output moves between
//! consecutive steps, find the stable segment, and inside that segment only
//! evaluate the network on the first step of every group of `S` steps. The
//! other steps reuse the cached output but still apply their own schedule
//! coefficients, so the state keeps moving along the trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default profiling threshold on the relative L1 distance.
pub const DEFAULT_EPSILON: f64 = 0.05;
/// Length of the underlying training noise schedule.
pub const TRAIN_TIMESTEPS: usize = 1000;
const BETA_START: f64 = 1e-4;
const BETA_END: f64 = 0.02;
pub const EMBED_MAX_FREQ: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub horizon: usize,
    pub action_dim: usize,
    pub cond_dim: usize,
    pub temb_dim: usize,
    pub hidden: usize,
}

impl NetShape {
    pub fn action_len(&self) -> usize {
        self.horizon * self.action_dim
    }

    fn input_len(&self) -> usize {
        self.action_len() + self.cond_dim + self.temb_dim
    }
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            horizon: 16,
            action_dim: 7,
            cond_dim: 32,
            temb_dim: 32,
            hidden: 256,
        }
    }
}

/// Clean-sample predictor `x0(x_t, cond, sigma_t)`: one tanh hidden layer and
/// a tanh output, so predictions stay in the normalized action range.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    shape: NetShape,
    seed: u64,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl DenoiserNet {
    pub fn new(shape: NetShape, seed: u64) -> Result<Self> {
        if shape.action_len() == 0 || shape.hidden == 0 || !shape.temb_dim.is_multiple_of(2) {
            return Err(invalid(format!("bad denoiser shape {shape:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_in = shape.input_len();
        let scale1 = 1.0 / (n_in as f64).sqrt();
        let scale2 = 1.0 / (shape.hidden as f64).sqrt();
        let mut normal = |n: usize, scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
                .collect()
        };
        let w1 = normal(shape.hidden * n_in, scale1);
        let b1 = normal(shape.hidden, 0.1);
        let w2 = normal(shape.action_len() * shape.hidden, scale2);
        Ok(Self {
            shape,
            seed,
            w1,
            b1,
            w2,
            b2: vec![0.0; shape.action_len()],
        })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn forward(&self, x: &[f64], cond: &[f64], temb: &[f64]) -> Vec<f64> {
        let s = self.shape;
        debug_assert_eq!(x.len(), s.action_len());
        debug_assert_eq!(cond.len(), s.cond_dim);
        debug_assert_eq!(temb.len(), s.temb_dim);
        let n_in = s.input_len();

        let mut hidden = self.b1.clone();
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.w1[j * n_in..(j + 1) * n_in];
            let (rx, rest) = row.split_at(x.len());
            let (rc, rt) = rest.split_at(cond.len());
            *h += dot(rx, x) + dot(rc, cond) + dot(rt, temb);
            *h = h.tanh();
        }
        self.b2
            .iter()
            .enumerate()
            .map(|(k, b)| (b + dot(&self.w2[k * s.hidden..(k + 1) * s.hidden], &hidden)).tanh())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sinusoidal embedding of the noise level `ln(sigma)`, where
/// `sigma = sqrt((1 - alpha_bar) / alpha_bar)`. Frequencies span one decade
/// below [`EMBED_MAX_FREQ`].
pub fn noise_level_embedding(alpha_bar: f64, dim: usize) -> Vec<f64> {
    let c = ((1.0 - alpha_bar) / alpha_bar).sqrt().ln();
    let half = dim / 2;
    let freqs = (0..half).map(|k| EMBED_MAX_FREQ * (-(10f64.ln()) * k as f64 / half as f64).exp());
    let (sin, cos): (Vec<f64>, Vec<f64>) = freqs.map(|f| ((c * f).sin(), (c * f).cos())).unzip();
    sin.into_iter().chain(cos).collect()
}

/// Per-step coefficients of the deterministic DDIM update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepCoefficients {
    pub timestep: usize,
    pub alpha_bar: f64,
    pub alpha_bar_prev: f64,
}

impl StepCoefficients {
    /// The network predicts the clean sample; the implied noise is
    /// recovered from the current state and both are recombined at the
    /// previous noise level:
    /// `x_prev = sqrt(a_prev) * x0 + sqrt(1 - a_prev) * (x - sqrt(a) * x0) / sqrt(1 - a)`.
    fn apply(&self, x: &mut [f64], x0: &[f64]) {
        let (a, ap) = (self.alpha_bar, self.alpha_bar_prev);
        let (sa, s1a) = (a.sqrt(), (1.0 - a).sqrt());
        let (sap, s1ap) = (ap.sqrt(), (1.0 - ap).sqrt());
        for (xi, x0i) in x.iter_mut().zip(x0) {
            let eps = (*xi - sa * x0i) / s1a;
            *xi = sap * x0i + s1ap * eps;
        }
    }
}

/// Linear-beta schedule over [`TRAIN_TIMESTEPS`], sampled at `T` evenly
/// spaced timesteps (descending).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: Vec<StepCoefficients>,
}

impl NoiseSchedule {
    pub fn linear(total_steps: usize) -> Result<Self> {
        if total_steps == 0 || total_steps > TRAIN_TIMESTEPS {
            return Err(invalid(format!(
                "total denoising steps must be within 1..={TRAIN_TIMESTEPS}, got {total_steps}"
            )));
        }
        let mut alpha_bars = Vec::with_capacity(TRAIN_TIMESTEPS);
        let mut acc = 1.0;
        for i in 0..TRAIN_TIMESTEPS {
            let beta = BETA_START
                + (BETA_END - BETA_START) * i as f64 / (TRAIN_TIMESTEPS - 1) as f64;
            acc *= 1.0 - beta;
            alpha_bars.push(acc);
        }
        let stride = TRAIN_TIMESTEPS / total_steps;
        let timesteps: Vec<usize> = (0..total_steps).rev().map(|i| i * stride).collect();
        let steps = timesteps
            .iter()
            .enumerate()
            .map(|(i, &t)| StepCoefficients {
                timestep: t,
                alpha_bar: alpha_bars[t],
                alpha_bar_prev: timesteps.get(i + 1).map_or(1.0, |&tp| alpha_bars[tp]),
            })
            .collect();
        Ok(Self { steps })
    }

    pub fn total_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, i: usize) -> &StepCoefficients {
        &self.steps[i]
    }
}

/// Half-open range of step indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableSegment {
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub epsilon: f64,
}

impl StableSegment {
    pub fn new(start: usize, end: usize) -> Self {
        Self {
            start,
            end,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, step: usize) -> bool {
        (self.start..self.end).contains(&step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Cache period `S`: one evaluation per `S` steps inside the segment.
    pub period: usize,
    pub segment: StableSegment,
}

impl CacheConfig {
    pub fn new(period: usize, segment: StableSegment) -> Self {
        Self { period, segment }
    }

    pub fn validate(&self, total_steps: usize) -> Result<()> {
        if self.period == 0 {
            return Err(Error::InvalidConfig("cache period S must be >= 1".into()));
        }
        if self.segment.start > self.segment.end || self.segment.end > total_steps {
            return Err(Error::InvalidConfig(format!(
                "segment [{}, {}) is not within [0, {total_steps}]",
                self.segment.start, self.segment.end
            )));
        }
        Ok(())
    }
}

/// Which steps evaluate the network (`true`) and which broadcast the cached
/// output (`false`).
pub fn cache_plan(total_steps: usize, cfg: &CacheConfig) -> Result<Vec<bool>> {
    cfg.validate(total_steps)?;
    Ok((0..total_steps)
        .map(|i| !cfg.segment.contains(i) || (i - cfg.segment.start).is_multiple_of(cfg.period))
        .collect())
}

/// Closed form of the broadcast count: `|segment| - ceil(|segment| / S)`.
pub fn skipped_steps(segment_len: usize, period: usize) -> usize {
    segment_len - segment_len.div_ceil(period)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub computed_steps: usize,
    pub skipped_steps: usize,
}

impl StepStats {
    /// Uncached steps per evaluated step.
    pub fn step_reduction(&self) -> f64 {
        (self.computed_steps + self.skipped_steps) as f64 / self.computed_steps as f64
    }
}

/// Per-step quantities that can be profiled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    ModelOutput,
    NoisyInput,
    TimestepEmbedding,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub outputs: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRun {
    /// Final action chunk, `horizon x action_dim` row-major.
    pub action: Vec<f64>,
    pub horizon: usize,
    pub action_dim: usize,
    pub stats: StepStats,
    /// Present when the run was made with profiling on.
    pub trajectory: Option<Trajectory>,
}

impl DenoiseRun {
    pub fn total_steps(&self) -> usize {
        self.stats.computed_steps + self.stats.skipped_steps
    }

    pub fn signal(&self, signal: Signal) -> Option<&[Vec<f64>]> {
        let t = self.trajectory.as_ref()?;
        Some(match signal {
            Signal::ModelOutput => &t.outputs,
            Signal::NoisyInput => &t.inputs,
            Signal::TimestepEmbedding => &t.embeddings,
        })
    }
}

/// `||curr - next||_1 / ||next||_1`.
pub fn l1_rel(x_curr: &[f64], x_next: &[f64]) -> Result<f64> {
    if x_curr.len() != x_next.len() {
        return Err(invalid(format!(
            "l1_rel: shape mismatch {} vs {}",
            x_curr.len(),
            x_next.len()
        )));
    }
    let denom: f64 = x_next.iter().map(|v| v.abs()).sum();
    if denom == 0.0 {
        return Err(invalid("l1_rel: reference has zero L1 norm"));
    }
    let num: f64 = x_curr.iter().zip(x_next).map(|(a, b)| (a - b).abs()).sum();
    Ok(num / denom)
}

/// Initial noise for a run.
pub fn initial_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn sample(
    condition: &[f64],
    sched: &NoiseSchedule,
    net: &DenoiserNet,
    plan: &[bool],
    seed: u64,
    profile: bool,
) -> Result<DenoiseRun> {
    let shape = net.shape();
    if condition.len() != shape.cond_dim {
        return Err(invalid(format!(
            "condition has {} features, network expects {}",
            condition.len(),
            shape.cond_dim
        )));
    }
    let mut x = initial_noise(shape.action_len(), seed);
    let mut cached: Option<Vec<f64>> = None;
    let mut stats = StepStats::default();
    let mut traj = profile.then(Trajectory::default);

    for (i, &evaluate) in plan.iter().enumerate() {
        let coeff = sched.step(i);
        let temb = if evaluate || profile {
            noise_level_embedding(coeff.alpha_bar, shape.temb_dim)
        } else {
            Vec::new()
        };
        let eps = match (&cached, evaluate) {
            (Some(out), false) => {
                stats.skipped_steps += 1;
                out.clone()
            }
            _ => {
                stats.computed_steps += 1;
                net.forward(&x, condition, &temb)
            }
        };
        if let Some(t) = traj.as_mut() {
            t.inputs.push(x.clone());
            t.embeddings.push(temb);
            t.outputs.push(eps.clone());
        }
        coeff.apply(&mut x, &eps);
        check_finite(&x, i)?;
        cached = Some(eps);
    }

    Ok(DenoiseRun {
        action: x,
        horizon: shape.horizon,
        action_dim: shape.action_dim,
        stats,
        trajectory: traj,
    })
}

/// Step-at-a-time sampler for callers that switch conditioning mid-run.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    net: &'a DenoiserNet,
    sched: &'a NoiseSchedule,
    x: Vec<f64>,
    next: usize,
}

impl<'a> Sampler<'a> {
    pub fn new(net: &'a DenoiserNet, sched: &'a NoiseSchedule, seed: u64) -> Self {
        Self {
            net,
            sched,
            x: initial_noise(net.shape().action_len(), seed),
            next: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.sched.total_steps() - self.next
    }

    pub fn completed(&self) -> usize {
        self.next
    }

    /// Evaluate the network on `condition` and advance one step.
    pub fn step(&mut self, condition: &[f64]) -> Result<()> {
        if self.remaining() == 0 {
            return Err(invalid("sampler has no steps left"));
        }
        if condition.len() != self.net.shape().cond_dim {
            return Err(invalid(format!(
                "condition has {} features, network expects {}",
                condition.len(),
                self.net.shape().cond_dim
            )));
        }
        let coeff = self.sched.step(self.next);
        let temb = noise_level_embedding(coeff.alpha_bar, self.net.shape().temb_dim);
        let out = self.net.forward(&self.x, condition, &temb);
        coeff.apply(&mut self.x, &out);
        check_finite(&self.x, self.next)?;
        self.next += 1;
        Ok(())
    }

    pub fn finish(self) -> Vec<f64> {
        self.x
    }
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(bad) => Err(Error::NonFinite {
            step,
            detail: format!("state element {bad} is {}", x[bad]),
        }),
        None => Ok(()),
    }
}

/// Uncached sampling: every step evaluates the network.
pub fn denoise_full(
    condition: &[f64],
    sched: &NoiseSchedule,
    net: &DenoiserNet,
    seed: u64,
    profile: bool,
) -> Result<DenoiseRun> {
    let plan = vec![true; sched.total_steps()];
    sample(condition, sched, net, &plan, seed, profile)
}

pub fn denoise_cached(
    condition: &[f64],
    sched: &NoiseSchedule,
    net: &DenoiserNet,
    cfg: &CacheConfig,
    seed: u64,
    profile: bool,
) -> Result<DenoiseRun> {
    let plan = cache_plan(sched.total_steps(), cfg)?;
    sample(condition, sched, net, &plan, seed, profile)
}

/// Consecutive-step `l1_rel` of a profiled signal; entry `i` compares step
/// `i` with step `i + 1`.
pub fn l1_rel_series(run: &DenoiseRun, signal: Signal) -> Result<Vec<f64>> {
    let values = run
        .signal(signal)
        .ok_or_else(|| invalid("run was not profiled; intermediate values are missing"))?;
    if values.len() != run.total_steps() {
        return Err(invalid("profiled run is missing steps"));
    }
    values.windows(2).map(|w| l1_rel(&w[0], &w[1])).collect()
}

/// Longest run of indices whose value is `< epsilon`; earliest wins ties.
/// Returns an empty segment (start = end) when nothing qualifies.
pub fn stable_segment_from_series(series: &[f64], epsilon: f64) -> StableSegment {
    let (mut best_start, mut best_len) = (0, 0);
    let mut run_start = None;
    for (i, &v) in series.iter().chain(std::iter::once(&f64::INFINITY)).enumerate() {
        match (v < epsilon, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s > best_len {
                    best_start = s;
                    best_len = i - s;
                }
                run_start = None;
            }
            _ => {}
        }
    }
    StableSegment {
        start: best_start,
        end: best_start + best_len,
        epsilon,
    }
}

/// Offline profiling gated on the network output.
pub fn profile_stability(run: &DenoiseRun, epsilon: f64) -> Result<StableSegment> {
    profile_signal(run, Signal::ModelOutput, epsilon)
}

pub fn profile_signal(run: &DenoiseRun, signal: Signal, epsilon: f64) -> Result<StableSegment> {
    Ok(stable_segment_from_series(&l1_rel_series(run, signal)?, epsilon))
}

/// Relative L2 distance between the final action chunks.
pub fn deviation(full: &DenoiseRun, cached: &DenoiseRun) -> f64 {
    assert_eq!(full.action.len(), cached.action.len(), "action chunk shapes differ");
    let diff: f64 = full
        .action
        .iter()
        .zip(&cached.action)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = full.action.iter().map(|a| a * a).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

/// The committed toy configuration used by examples, goldens, and the
/// acceptance suite.
#[derive(Debug, Clone)]
pub struct ToyPolicy {
    pub net: DenoiserNet,
    pub schedule: NoiseSchedule,
    pub condition: Vec<f64>,
    pub noise_seed: u64,
}

impl ToyPolicy {
    pub const NET_SEED: u64 = 0;
    pub const CONDITION_SEED: u64 = 5;
    pub const NOISE_SEED: u64 = 1;

    pub fn reference() -> Self {
        Self::with_steps(100).expect("reference toy config is valid")
    }

    pub fn with_steps(total_steps: usize) -> Result<Self> {
        let shape = NetShape::default();
        Ok(Self {
            net: DenoiserNet::new(shape, Self::NET_SEED)?,
            schedule: NoiseSchedule::linear(total_steps)?,
            condition: initial_noise(shape.cond_dim, Self::CONDITION_SEED),
            noise_seed: Self::NOISE_SEED,
        })
    }

    pub fn full(&self, profile: bool) -> Result<DenoiseRun> {
        denoise_full(&self.condition, &self.schedule, &self.net, self.noise_seed, profile)
    }

    pub fn cached(&self, cfg: &CacheConfig) -> Result<DenoiseRun> {
        denoise_cached(&self.condition, &self.schedule, &self.net, cfg, self.noise_seed, false)
    }
}
