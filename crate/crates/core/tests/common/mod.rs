//! Property checks shared by the property suite and the acceptance run.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

use vlaperf::catalog::Catalog;
use vlaperf::dpcache::{cache_plan, skipped_steps, CacheConfig, StableSegment};
use vlaperf::fusion::{predicted_speedup, ContentionModel, FusionSchedule};
use vlaperf::leaderboard::{rank, Constraint, MeasurementRecord, RankingMode, RankingPolicy};
use vlaperf::sim::{run_sim, Schedule, SimConfig};

pub type Check = Result<(), TestCaseError>;

pub fn config(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn runner(cases: u32, seed: u64) -> TestRunner {
    TestRunner::new(config(cases, seed))
}

pub fn record(i: usize, latency_ms: f64, energy_kj: f64, cost_usd: f64) -> MeasurementRecord {
    MeasurementRecord {
        model: "m".into(),
        hardware: format!("hw{i}"),
        latency_ms,
        energy_kj,
        cost_usd,
        score_pct: 50.0,
        precision: "bf16".into(),
    }
}

/// 2 to 8 records with distinct names and metrics in realistic ranges.
pub fn records() -> impl Strategy<Value = Vec<MeasurementRecord>> {
    prop::collection::vec((20.0..2000.0f64, 0.2..10.0f64, 100.0..5000.0f64), 2..8).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (l, e, c))| record(i, l, e, c))
            .collect()
    })
}

/// (T, start, end, S) with `start <= end <= T`, S in 1..=16.
pub fn segment_case() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..=120)
        .prop_flat_map(|t| (Just(t), 0..=t))
        .prop_flat_map(|(t, a)| (Just(t), Just(a), a..=t, 1usize..=16))
}

pub fn check_skip_count(t: usize, start: usize, end: usize, s: usize) -> Check {
    let cfg = CacheConfig::new(s, StableSegment::new(start, end));
    let plan = cache_plan(t, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    // walk the steps: inside the segment each evaluation buys S - 1 reuses
    let mut brute = 0;
    let mut reuse_left = 0;
    for (i, &planned) in plan.iter().enumerate() {
        let computed = if (start..end).contains(&i) {
            if reuse_left == 0 {
                reuse_left = s - 1;
                true
            } else {
                reuse_left -= 1;
                brute += 1;
                false
            }
        } else {
            reuse_left = 0;
            true
        };
        prop_assert_eq!(planned, computed, "step {}", i);
    }
    let len = end - start;
    prop_assert_eq!(brute, skipped_steps(len, s));
    prop_assert_eq!(brute, len - len.div_ceil(s));
    if s > 1 {
        let prev = cache_plan(t, &CacheConfig::new(s - 1, StableSegment::new(start, end))).unwrap();
        let computed = |p: &[bool]| p.iter().filter(|c| **c).count();
        prop_assert!(computed(&plan) <= computed(&prev));
    }
    Ok(())
}

fn ranked(records: &[MeasurementRecord], c: &Constraint, mode: RankingMode) -> Vec<String> {
    rank(records, c, &RankingPolicy::new(mode))
        .unwrap()
        .order()
        .into_iter()
        .map(String::from)
        .collect()
}

pub fn check_scale_invariance(records: &[MeasurementRecord], factor: f64) -> Check {
    let scaled: Vec<_> = records
        .iter()
        .map(|r| MeasurementRecord {
            cost_usd: r.cost_usd * factor,
            ..r.clone()
        })
        .collect();
    for mode in [RankingMode::CE, RankingMode::CET] {
        prop_assert_eq!(
            ranked(records, &Constraint::none(), mode),
            ranked(&scaled, &Constraint::none(), mode),
            "{:?} changed under cost x{}",
            mode,
            factor
        );
    }
    Ok(())
}

pub fn check_dominated_addition(records: &[MeasurementRecord], worse: (f64, f64, f64)) -> Check {
    let max = |f: fn(&MeasurementRecord) -> f64| records.iter().map(f).fold(f64::MIN, f64::max);
    let extra = record(
        99,
        max(|r| r.latency_ms) + worse.0,
        max(|r| r.energy_kj) + worse.1,
        max(|r| r.cost_usd) + worse.2,
    );
    let mut more = records.to_vec();
    more.push(extra);
    for mode in RankingMode::ALL {
        prop_assert_eq!(
            ranked(records, &Constraint::none(), mode)[0].clone(),
            ranked(&more, &Constraint::none(), mode)[0].clone(),
            "{:?}",
            mode
        );
    }
    Ok(())
}

pub fn check_screening_order(records: &[MeasurementRecord], c: &Constraint) -> Check {
    let keep = |r: &MeasurementRecord| {
        c.required_hz.is_none_or(|hz| r.frequency_hz() >= hz) && c.max_cost.is_none_or(|m| r.cost_usd <= m)
    };
    let pre: Vec<_> = records.iter().filter(|r| keep(r)).cloned().collect();
    for mode in RankingMode::ALL {
        let after = rank(records, c, &RankingPolicy::new(mode)).unwrap();
        if pre.is_empty() {
            prop_assert!(!after.is_feasible());
            continue;
        }
        let before = rank(&pre, &Constraint::none(), &RankingPolicy::new(mode)).unwrap();
        let key = |r: &vlaperf::leaderboard::Recommendation| -> Vec<(String, u64)> {
            r.entries.iter().map(|e| (e.hardware.clone(), e.sort_key.to_bits())).collect()
        };
        prop_assert_eq!(key(&before), key(&after), "{:?}", mode);
    }
    Ok(())
}

pub fn check_single_metric_sorted(records: &[MeasurementRecord], rotate: usize) -> Check {
    let mut shuffled = records.to_vec();
    shuffled.rotate_left(rotate % records.len());
    shuffled.reverse();
    for (mode, f) in [
        (RankingMode::TimePriority, (|r: &MeasurementRecord| r.latency_ms) as fn(&MeasurementRecord) -> f64),
        (RankingMode::CostPriority, |r| r.cost_usd),
        (RankingMode::EnergyPriority, |r| r.energy_kj),
    ] {
        let a = rank(records, &Constraint::none(), &RankingPolicy::new(mode)).unwrap();
        let b = rank(&shuffled, &Constraint::none(), &RankingPolicy::new(mode)).unwrap();
        prop_assert_eq!(a.order(), b.order());
        let mut expect = records.to_vec();
        expect.sort_by(|x, y| f(x).total_cmp(&f(y)));
        let keys: Vec<f64> = a.entries.iter().map(|e| e.sort_key).collect();
        let sorted: Vec<f64> = expect.iter().map(f).collect();
        prop_assert_eq!(keys, sorted);
    }
    Ok(())
}

pub fn contention() -> impl Strategy<Value = ContentionModel> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b, c, d)| ContentionModel {
        vlm_compute: a,
        vlm_bandwidth: b,
        ae_compute: c,
        ae_bandwidth: d,
    })
}

pub fn check_contention_monotone(t_v: f64, t_a: f64, s: usize, cm: ContentionModel, which: usize, bump: f64) -> Check {
    let sched = FusionSchedule::new(10, s).unwrap();
    let mut more = cm;
    let share = match which {
        0 => &mut more.vlm_compute,
        1 => &mut more.vlm_bandwidth,
        2 => &mut more.ae_compute,
        _ => &mut more.ae_bandwidth,
    };
    *share = (*share + bump).min(1.0);
    let lo = predicted_speedup(t_v, t_a, &sched, &cm);
    let hi = predicted_speedup(t_v, t_a, &sched, &more);
    prop_assert!(hi <= lo + 1e-12, "share {} up: {} -> {}", which, lo, hi);
    prop_assert_eq!(predicted_speedup(t_v, t_a, &sched, &ContentionModel::full()), 1.0);
    Ok(())
}

pub fn check_speedup_in_s(t_v: f64, t_a: f64, k: usize) -> Check {
    let ceiling = (t_v + t_a) / t_v.max(t_a);
    let mut prev = 0.0;
    for s in 0..=k {
        let sp = predicted_speedup(t_v, t_a, &FusionSchedule::new(k, s).unwrap(), &ContentionModel::zero());
        prop_assert!(sp >= prev - 1e-12, "s = {}: {} < {}", s, sp, prev);
        prop_assert!(sp <= ceiling * (1.0 + 1e-12), "s = {}: {} above ceiling {}", s, sp, ceiling);
        prev = sp;
    }
    Ok(())
}

pub fn dominance_case() -> impl Strategy<Value = (usize, usize, usize, usize, usize, f64, usize)> {
    // hardware index, period, segment start, segment len, stale steps, contention level, cycles
    (0usize..6, 1usize..=5, 0usize..5, 1usize..=5, 0usize..=10, 0.0..=1.0f64, 2usize..12)
}

pub fn check_schedule_dominance(
    cat: &Catalog,
    (hw, period, start, len, stale, level, cycles): (usize, usize, usize, usize, usize, f64, usize),
) -> Check {
    let model = cat.model("pi0").unwrap().clone();
    let hw = cat.hardware_specs()[hw].clone();
    let cache = CacheConfig::new(period, StableSegment::new(start, (start + len).min(10)));
    let fusion = FusionSchedule::new(10, stale).unwrap();
    let run = |schedule| {
        let mut cfg = SimConfig::new(model.clone(), hw.clone())
            .with_schedule(schedule)
            .with_contention(ContentionModel::level(level));
        cfg.n_cycles = cycles;
        let r = run_sim(&cfg).unwrap();
        assert_eq!(r.frequency_hz, 1000.0 / r.mean_latency_ms);
        r.mean_latency_ms
    };
    let sync = run(Schedule::Synchronous);
    let dp = run(Schedule::DpCache { cache });
    let fused = run(Schedule::Fused { fusion });
    let both = run(Schedule::FusedPlusCache { fusion, cache });
    let tol = 1e-9 * sync;
    prop_assert!(dp <= sync + tol, "dp {} sync {}", dp, sync);
    prop_assert!(fused <= sync + tol, "fused {} sync {}", fused, sync);
    prop_assert!(both <= fused + tol, "both {} fused {}", both, fused);
    Ok(())
}
