//! CET (cost, energy, time) feasibility gates and ranking.
//!
//! Selection runs in three steps: pick the model's measurements, drop pairs
//! that cannot load the weights or cannot hold the control rate (or blow a
//! budget), then sort the survivors by the chosen policy.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::roofline::{HardwareSpec, ModelSpec};

/// Runtime/activation headroom applied on top of the weight footprint.
pub const DEFAULT_MEMORY_OVERHEAD: f64 = 1.2;

/// One measured (model, hardware) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub model: String,
    pub hardware: String,
    /// Per inference cycle.
    pub latency_ms: f64,
    /// Per task episode.
    pub energy_kj: f64,
    pub cost_usd: f64,
    /// Task success rate; carried through untouched.
    pub score_pct: f64,
    pub precision: String,
}

impl MeasurementRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.latency_ms.is_finite() && self.latency_ms > 0.0) {
            return Err(invalid("latency_ms must be > 0"));
        }
        if !(self.energy_kj.is_finite() && self.energy_kj >= 0.0) {
            return Err(invalid("energy_kj must be >= 0"));
        }
        if !(self.cost_usd.is_finite() && self.cost_usd >= 0.0) {
            return Err(invalid("cost_usd must be >= 0"));
        }
        if !(0.0..=100.0).contains(&self.score_pct) {
            return Err(invalid("score_pct must be within [0, 100]"));
        }
        Ok(())
    }

    pub fn frequency_hz(&self) -> f64 {
        1000.0 / self.latency_ms
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_energy: Option<f64>,
}

impl Constraint {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn hz(required_hz: f64) -> Self {
        Self {
            required_hz: Some(required_hz),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("required_hz", self.required_hz),
            ("max_cost", self.max_cost),
            ("max_energy", self.max_energy),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(format!("constraint.{field} must be > 0, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMode {
    TimePriority,
    CostPriority,
    EnergyPriority,
    #[serde(rename = "ce")]
    CE,
    #[serde(rename = "cet")]
    CET,
}

impl RankingMode {
    pub const ALL: [RankingMode; 5] = [
        Self::TimePriority,
        Self::CostPriority,
        Self::EnergyPriority,
        Self::CE,
        Self::CET,
    ];

    pub fn is_composite(self) -> bool {
        matches!(self, Self::CE | Self::CET)
    }
}

impl std::str::FromStr for RankingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "time" | "time_priority" => Ok(Self::TimePriority),
            "cost" | "cost_priority" => Ok(Self::CostPriority),
            "energy" | "energy_priority" => Ok(Self::EnergyPriority),
            "ce" => Ok(Self::CE),
            "cet" => Ok(Self::CET),
            other => Err(invalid(format!("unknown ranking policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    #[serde(default = "one")]
    pub cost: f64,
    #[serde(default = "one")]
    pub energy: f64,
    #[serde(default = "one")]
    pub time: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            cost: 1.0,
            energy: 1.0,
            time: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingPolicy {
    pub mode: RankingMode,
    #[serde(default)]
    pub weights: Weights,
}

impl RankingPolicy {
    pub fn new(mode: RankingMode) -> Self {
        Self {
            mode,
            weights: Weights::default(),
        }
    }

    pub fn with_weights(mode: RankingMode, weights: Weights) -> Self {
        Self { mode, weights }
    }

    /// Composite weights actually in play: (cost, energy, time).
    fn active_weights(&self) -> [f64; 3] {
        let w = self.weights;
        match self.mode {
            RankingMode::CE => [w.cost, w.energy, 0.0],
            RankingMode::CET => [w.cost, w.energy, w.time],
            RankingMode::CostPriority => [1.0, 0.0, 0.0],
            RankingMode::EnergyPriority => [0.0, 1.0, 0.0],
            RankingMode::TimePriority => [0.0, 0.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        for (field, v) in [("cost", w.cost), ("energy", w.energy), ("time", w.time)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("policy.weights.{field} must be >= 0")));
            }
        }
        if self.mode.is_composite() && self.active_weights().iter().all(|&v| v == 0.0) {
            return Err(invalid("policy.weights: composite modes need a positive weight"));
        }
        Ok(())
    }
}

/// Why a pair was dropped before ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    Oom {
        required_bytes: f64,
        available_bytes: f64,
    },
    Frequency {
        achieved_hz: f64,
        required_hz: f64,
    },
    Budget {
        cost_usd: f64,
        max_cost: f64,
    },
    Energy {
        energy_kj: f64,
        max_energy: f64,
    },
}

impl ExclusionReason {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Oom { .. } => "oom",
            Self::Frequency { .. } => "frequency",
            Self::Budget { .. } => "budget",
            Self::Energy { .. } => "energy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub hardware: String,
    pub reasons: Vec<ExclusionReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityFlags {
    /// `None` when no model spec was available for the memory check.
    pub vram: Option<bool>,
    pub frequency: bool,
    pub budget: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub hardware: String,
    /// Ascending sort key: the raw metric in single-metric modes, the
    /// weighted normalized sum in composite modes.
    pub sort_key: f64,
    pub latency_ms: f64,
    pub frequency_hz: f64,
    pub energy_kj: f64,
    pub cost_usd: f64,
    pub score_pct: f64,
    pub flags: FeasibilityFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ranked,
    NoFeasiblePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub model: String,
    pub policy: RankingPolicy,
    pub constraint: Constraint,
    pub outcome: Outcome,
    pub entries: Vec<RankedEntry>,
    pub excluded: Vec<Exclusion>,
}

impl Recommendation {
    pub fn top(&self) -> Option<&RankedEntry> {
        self.entries.first()
    }

    pub fn order(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.hardware.as_str()).collect()
    }

    pub fn is_feasible(&self) -> bool {
        self.outcome == Outcome::Ranked
    }

    pub fn exclusion(&self, hardware: &str) -> Option<&Exclusion> {
        self.excluded.iter().find(|e| e.hardware == hardware)
    }
}

pub fn vram_feasible(m: &ModelSpec, hw: &HardwareSpec) -> bool {
    vram_feasible_with(m, hw, DEFAULT_MEMORY_OVERHEAD)
}

pub fn vram_feasible_with(m: &ModelSpec, hw: &HardwareSpec, overhead_factor: f64) -> bool {
    m.weight_bytes() * overhead_factor <= hw.memory_bytes
}

/// Inclusive: a pair exactly at the threshold passes.
pub fn frequency_feasible(r: &MeasurementRecord, required_hz: f64) -> bool {
    r.frequency_hz() >= required_hz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub t_s: f64,
    pub power_w: f64,
}

/// Trapezoidal energy of a power trace, in kJ.
pub fn energy_from_power_trace(trace: &[PowerSample]) -> Result<f64> {
    if trace.len() < 2 {
        return Err(invalid(format!(
            "power trace needs at least 2 samples, got {}",
            trace.len()
        )));
    }
    for (i, s) in trace.iter().enumerate() {
        if !(s.power_w.is_finite() && s.power_w >= 0.0) || !s.t_s.is_finite() {
            return Err(invalid(format!("sample {i}: invalid power or time")));
        }
    }
    let mut joules = 0.0;
    for (i, w) in trace.windows(2).enumerate() {
        let dt = w[1].t_s - w[0].t_s;
        if dt <= 0.0 {
            return Err(invalid(format!(
                "sample {}: timestamps must be strictly increasing ({} after {})",
                i + 1,
                w[1].t_s,
                w[0].t_s
            )));
        }
        joules += 0.5 * (w[0].power_w + w[1].power_w) * dt;
    }
    Ok(joules / 1000.0)
}

fn metrics(r: &MeasurementRecord) -> [f64; 3] {
    [r.cost_usd, r.energy_kj, r.latency_ms]
}

/// `a` is at least as good everywhere and strictly better somewhere, on the
/// metrics selected by `mask`.
fn dominates(a: &[f64; 3], b: &[f64; 3], mask: &[bool; 3]) -> bool {
    let mut strictly = false;
    for i in 0..3 {
        if !mask[i] {
            continue;
        }
        if a[i] > b[i] {
            return false;
        }
        if a[i] < b[i] {
            strictly = true;
        }
    }
    strictly
}

/// Weighted sum of per-metric normalized values. Each metric is scaled to
/// [0, 1] between its best value and its worst value on the non-dominated
/// subset (ideal and nadir points), so dominated stragglers cannot stretch
/// the ranges.
fn composite_keys(records: &[&MeasurementRecord], weights: [f64; 3]) -> Vec<f64> {
    let mask = weights.map(|w| w > 0.0);
    let all: Vec<[f64; 3]> = records.iter().map(|r| metrics(r)).collect();
    let front: Vec<&[f64; 3]> = all
        .iter()
        .filter(|m| !all.iter().any(|o| dominates(o, m, &mask)))
        .collect();

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for m in &front {
        for i in 0..3 {
            lo[i] = lo[i].min(m[i]);
            hi[i] = hi[i].max(m[i]);
        }
    }
    all.iter()
        .map(|m| {
            (0..3)
                .filter(|&i| mask[i])
                .map(|i| {
                    let range = hi[i] - lo[i];
                    let norm = if range > 0.0 { (m[i] - lo[i]) / range } else { 0.0 };
                    weights[i] * norm
                })
                .sum()
        })
        .collect()
}

fn sort_keys(records: &[&MeasurementRecord], policy: &RankingPolicy) -> Vec<f64> {
    match policy.mode {
        RankingMode::TimePriority => records.iter().map(|r| r.latency_ms).collect(),
        RankingMode::CostPriority => records.iter().map(|r| r.cost_usd).collect(),
        RankingMode::EnergyPriority => records.iter().map(|r| r.energy_kj).collect(),
        RankingMode::CE | RankingMode::CET => composite_keys(records, policy.active_weights()),
    }
}

fn record_exclusions(r: &MeasurementRecord, c: &Constraint) -> Vec<ExclusionReason> {
    let mut reasons = Vec::new();
    if let Some(hz) = c.required_hz {
        if !frequency_feasible(r, hz) {
            reasons.push(ExclusionReason::Frequency {
                achieved_hz: r.frequency_hz(),
                required_hz: hz,
            });
        }
    }
    if let Some(max) = c.max_cost {
        if r.cost_usd > max {
            reasons.push(ExclusionReason::Budget {
                cost_usd: r.cost_usd,
                max_cost: max,
            });
        }
    }
    if let Some(max) = c.max_energy {
        if r.energy_kj > max {
            reasons.push(ExclusionReason::Energy {
                energy_kj: r.energy_kj,
                max_energy: max,
            });
        }
    }
    reasons
}

fn check_single_model(records: &[MeasurementRecord]) -> Result<String> {
    let model = records.first().map(|r| r.model.clone()).unwrap_or_default();
    if let Some(other) = records.iter().find(|r| r.model != model) {
        return Err(invalid(format!(
            "records mix models `{model}` and `{}`",
            other.model
        )));
    }
    Ok(model)
}

/// Screen and sort the measurements of a single model.
pub fn rank(
    records: &[MeasurementRecord],
    c: &Constraint,
    p: &RankingPolicy,
) -> Result<Recommendation> {
    let model = check_single_model(records)?;
    rank_inner(model, records, c, p, &HashMap::new(), Vec::new())
}

fn rank_inner(
    model: String,
    records: &[MeasurementRecord],
    c: &Constraint,
    p: &RankingPolicy,
    vram: &HashMap<&str, bool>,
    mut excluded: Vec<Exclusion>,
) -> Result<Recommendation> {
    c.validate()?;
    p.validate()?;
    for r in records {
        r.validate()
            .map_err(|e| invalid(format!("record {}/{}: {e}", r.model, r.hardware)))?;
    }

    let mut feasible = Vec::new();
    for r in records {
        let reasons = record_exclusions(r, c);
        if reasons.is_empty() {
            feasible.push(r);
        } else {
            excluded.push(Exclusion {
                hardware: r.hardware.clone(),
                reasons,
            });
        }
    }

    let keys = sort_keys(&feasible, p);
    let mut order: Vec<usize> = (0..feasible.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .partial_cmp(&keys[b])
            .unwrap_or(Ordering::Equal)
            .then(
                feasible[a]
                    .cost_usd
                    .partial_cmp(&feasible[b].cost_usd)
                    .unwrap_or(Ordering::Equal),
            )
            .then_with(|| feasible[a].hardware.cmp(&feasible[b].hardware))
    });

    let entries: Vec<RankedEntry> = order
        .into_iter()
        .enumerate()
        .map(|(rank, i)| {
            let r = feasible[i];
            RankedEntry {
                rank: rank + 1,
                hardware: r.hardware.clone(),
                sort_key: keys[i],
                latency_ms: r.latency_ms,
                frequency_hz: r.frequency_hz(),
                energy_kj: r.energy_kj,
                cost_usd: r.cost_usd,
                score_pct: r.score_pct,
                flags: FeasibilityFlags {
                    vram: vram.get(r.hardware.as_str()).copied(),
                    frequency: true,
                    budget: true,
                },
            }
        })
        .collect();

    Ok(Recommendation {
        model,
        policy: *p,
        constraint: *c,
        outcome: if entries.is_empty() {
            Outcome::NoFeasiblePair
        } else {
            Outcome::Ranked
        },
        entries,
        excluded,
    })
}

/// Full selection: memory gate, then frequency and budget gates, then sort.
/// Records for other models are ignored. Every device in `hw_specs` that
/// cannot hold the weights is reported as an OOM exclusion, measured or not.
pub fn select_platform(
    m: &ModelSpec,
    records: &[MeasurementRecord],
    hw_specs: &[HardwareSpec],
    c: &Constraint,
    p: &RankingPolicy,
) -> Result<Recommendation> {
    let by_name: HashMap<&str, &HardwareSpec> =
        hw_specs.iter().map(|h| (h.name.as_str(), h)).collect();
    let mine: Vec<&MeasurementRecord> = records.iter().filter(|r| r.model == m.name).collect();

    let mut vram = HashMap::new();
    let mut excluded = Vec::new();
    let mut loadable = Vec::new();
    for r in mine {
        let hw = by_name.get(r.hardware.as_str()).ok_or_else(|| Error::Unknown {
            kind: "hardware",
            name: r.hardware.clone(),
        })?;
        let fits = vram_feasible(m, hw);
        vram.insert(r.hardware.as_str(), fits);
        if fits {
            loadable.push(r.clone());
        } else {
            let mut reasons = vec![ExclusionReason::Oom {
                required_bytes: m.weight_bytes() * DEFAULT_MEMORY_OVERHEAD,
                available_bytes: hw.memory_bytes,
            }];
            reasons.extend(record_exclusions(r, c));
            excluded.push(Exclusion {
                hardware: r.hardware.clone(),
                reasons,
            });
        }
    }
    // Devices without a measurement still surface when the weights cannot
    // load; the others have nothing to rank on.
    for hw in hw_specs {
        if !vram.contains_key(hw.name.as_str()) && !vram_feasible(m, hw) {
            excluded.push(Exclusion {
                hardware: hw.name.clone(),
                reasons: vec![ExclusionReason::Oom {
                    required_bytes: m.weight_bytes() * DEFAULT_MEMORY_OVERHEAD,
                    available_bytes: hw.memory_bytes,
                }],
            });
        }
    }
    rank_inner(m.name.clone(), &loadable, c, p, &vram, excluded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(hw: &str, latency: f64, energy: f64, cost: f64) -> MeasurementRecord {
        MeasurementRecord {
            model: "pi0".into(),
            hardware: hw.into(),
            latency_ms: latency,
            energy_kj: energy,
            cost_usd: cost,
            score_pct: 86.0,
            precision: "bf16".into(),
        }
    }

    fn pi0_rows() -> Vec<MeasurementRecord> {
        vec![
            rec("4090", 102.3, 2.398, 3500.0),
            rec("Thor", 246.0, 1.282, 3400.0),
            rec("Orin", 920.6, 1.866, 1999.0),
            rec("B60", 306.5, 6.363, 599.0),
            rec("310P", 818.0, 2.618, 1030.0),
        ]
    }

    #[test]
    fn frequency_gate() {
        assert!(frequency_feasible(&rec("4090", 102.3, 1.0, 1.0), 5.0));
        assert!(!frequency_feasible(&rec("Orin", 920.6, 1.0, 1.0), 5.0));
        assert!(frequency_feasible(&rec("x", 1000.0, 1.0, 1.0), 1.0));
    }

    #[test]
    fn energy_integration() {
        let flat = [
            PowerSample { t_s: 0.0, power_w: 100.0 },
            PowerSample { t_s: 10.0, power_w: 100.0 },
        ];
        assert_eq!(energy_from_power_trace(&flat).unwrap(), 1.0);
        let ramp = [
            PowerSample { t_s: 0.0, power_w: 0.0 },
            PowerSample { t_s: 10.0, power_w: 100.0 },
        ];
        assert_eq!(energy_from_power_trace(&ramp).unwrap(), 0.5);
        assert!(energy_from_power_trace(&flat[..1]).is_err());
        let backwards = [flat[1], flat[0]];
        assert!(energy_from_power_trace(&backwards).is_err());
        let repeated = [flat[0], flat[0]];
        assert!(energy_from_power_trace(&repeated).is_err());
    }

    #[test]
    fn single_metric_orders() {
        let rows = pi0_rows();
        let none = Constraint::none();
        let order = |mode| {
            rank(&rows, &none, &RankingPolicy::new(mode))
                .unwrap()
                .order()
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>()
        };
        assert_eq!(order(RankingMode::TimePriority), ["4090", "Thor", "B60", "310P", "Orin"]);
        assert_eq!(order(RankingMode::CostPriority), ["B60", "310P", "Orin", "Thor", "4090"]);
        assert_eq!(order(RankingMode::EnergyPriority), ["Thor", "Orin", "4090", "310P", "B60"]);
    }

    #[test]
    fn frequency_screen_excludes_orin() {
        let time = RankingPolicy::new(RankingMode::TimePriority);
        // 310P runs at 1.22 Hz and Orin at 1.09 Hz.
        let r = rank(&pi0_rows(), &Constraint::hz(1.2), &time).unwrap();
        assert_eq!(r.order(), ["4090", "Thor", "B60", "310P"]);
        assert_eq!(r.exclusion("Orin").unwrap().reasons[0].code(), "frequency");

        let r = rank(&pi0_rows(), &Constraint::hz(2.0), &time).unwrap();
        assert_eq!(r.order(), ["4090", "Thor", "B60"]);
        assert!(r.exclusion("310P").is_some() && r.exclusion("Orin").is_some());

        let r = rank(&pi0_rows(), &Constraint::hz(5.0), &time).unwrap();
        assert_eq!(r.order(), ["4090"]);
    }

    #[test]
    fn budget_and_energy_caps() {
        let c = Constraint {
            max_cost: Some(2000.0),
            max_energy: Some(3.0),
            ..Constraint::none()
        };
        let r = rank(&pi0_rows(), &c, &RankingPolicy::new(RankingMode::CostPriority)).unwrap();
        assert_eq!(r.order(), ["310P", "Orin"]);
        assert_eq!(r.exclusion("B60").unwrap().reasons[0].code(), "energy");
        assert_eq!(r.exclusion("4090").unwrap().reasons[0].code(), "budget");
    }

    #[test]
    fn empty_feasible_set_is_a_result() {
        let r = rank(
            &pi0_rows(),
            &Constraint::hz(100.0),
            &RankingPolicy::new(RankingMode::CET),
        )
        .unwrap();
        assert_eq!(r.outcome, Outcome::NoFeasiblePair);
        assert!(r.entries.is_empty());
        assert_eq!(r.excluded.len(), 5);
        let empty = rank(&[], &Constraint::none(), &RankingPolicy::new(RankingMode::CE)).unwrap();
        assert_eq!(empty.outcome, Outcome::NoFeasiblePair);
    }

    #[test]
    fn composite_orders_on_table_rows() {
        // 4090 is dominated on (cost, energy) by Thor, so the ranges come
        // from the other four rows.
        let ce = rank(&pi0_rows(), &Constraint::none(), &RankingPolicy::new(RankingMode::CE)).unwrap();
        assert_eq!(ce.top().unwrap().hardware, "310P");
        let cet =
            rank(&pi0_rows(), &Constraint::none(), &RankingPolicy::new(RankingMode::CET)).unwrap();
        assert_eq!(cet.entries.len(), 5);
        // Cost-only weights degenerate to the cost ordering.
        let cost_only = RankingPolicy::with_weights(
            RankingMode::CET,
            Weights { cost: 1.0, energy: 0.0, time: 0.0 },
        );
        let r = rank(&pi0_rows(), &Constraint::none(), &cost_only).unwrap();
        assert_eq!(r.order(), ["B60", "310P", "Orin", "Thor", "4090"]);
    }

    #[test]
    fn ties_break_on_cost_then_name() {
        let rows = vec![rec("b", 10.0, 1.0, 5.0), rec("a", 10.0, 1.0, 5.0), rec("c", 10.0, 1.0, 1.0)];
        let r = rank(&rows, &Constraint::none(), &RankingPolicy::new(RankingMode::TimePriority))
            .unwrap();
        assert_eq!(r.order(), ["c", "a", "b"]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let rows = pi0_rows();
        assert!(rank(&rows, &Constraint::hz(-1.0), &RankingPolicy::new(RankingMode::CE)).is_err());
        let zero = RankingPolicy::with_weights(
            RankingMode::CE,
            Weights { cost: 0.0, energy: 0.0, time: 3.0 },
        );
        assert!(rank(&rows, &Constraint::none(), &zero).is_err());
        let mut mixed = rows.clone();
        mixed[0].model = "other".into();
        assert!(rank(&mixed, &Constraint::none(), &RankingPolicy::new(RankingMode::CE)).is_err());
    }

    #[test]
    fn policy_names_parse() {
        assert_eq!("cost".parse::<RankingMode>().unwrap(), RankingMode::CostPriority);
        assert_eq!("time-priority".parse::<RankingMode>().unwrap(), RankingMode::TimePriority);
        assert_eq!("CET".parse::<RankingMode>().unwrap(), RankingMode::CET);
        assert!("fastest".parse::<RankingMode>().is_err());
    }
}
