//! One line per acceptance criterion. Tolerances are the constants below.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;

use vlaperf::catalog::{parse_power_csv, Catalog};
use vlaperf::dpcache::{deviation, CacheConfig, StableSegment, ToyPolicy};
use vlaperf::fusion::{
    benchmark_fusion, predicted_speedup, ContentionModel, FusionSchedule, ObservationStream, Pacing, ToyVla, Workers,
};
use vlaperf::leaderboard::{
    energy_from_power_trace, select_platform, Constraint, ExclusionReason, RankingMode, RankingPolicy,
};
use vlaperf::roofline::{classify_boundedness, operational_intensity, ridge_point, Boundedness, PhaseRole};
use vlaperf::sim::{calibrate_overheads, phase_split, run_sim, utilization_proxy, SimConfig};

const RIDGE_4090: (f64, f64) = (330.0, 0.5);
const RIDGE_THOR: (f64, f64) = (945.05, 1.0);
const VLM_INTENSITY: (f64, f64) = (841.36, 1.0);
const DP_MIN_WALL_SPEEDUP: f64 = 1.5;
/// Fixed from the oracle run of the reference toy before the build
/// (measured 0.0017 at S = 4 on [20, 80)).
const DP_MAX_DEVIATION: f64 = 0.01;
const DP_BUDGET: Duration = Duration::from_secs(10);
const FUSION_MIN_SPEEDUP: f64 = 1.15;
const FUSION_BUDGET: Duration = Duration::from_secs(30);
const ROUND_TRIP_MS: f64 = 0.1;
const AE_PROXY_4090: (f64, f64) = (0.195, 0.005);
const ENERGY_TOL: f64 = 0.0;

fn near(v: f64, (target, tol): (f64, f64)) -> bool {
    (v - target).abs() <= tol
}

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn roofline() -> Outcome {
    let cat = Catalog::bundled();
    let hw = |n: &str| cat.hardware_spec(n).unwrap();
    let pi0 = cat.model("pi0").unwrap();
    let vlm = pi0.phase(PhaseRole::Backbone).unwrap();
    let ae = pi0.action_expert().unwrap();
    let (r4090, rthor, i) = (ridge_point(&hw("4090")), ridge_point(&hw("Thor")), operational_intensity(vlm));
    let split = classify_boundedness(vlm, &hw("4090")) == Boundedness::ComputeBound
        && ["4090", "Thor", "Orin"]
            .iter()
            .all(|n| classify_boundedness(ae, &hw(n)) == Boundedness::MemoryBound);
    (
        near(r4090, RIDGE_4090) && near(rthor, RIDGE_THOR) && near(i, VLM_INTENSITY) && split,
        format!(
            "ridge 4090 {r4090:.2}, Thor {rthor:.2}; VLM intensity {i:.2}; VLM compute-bound on 4090, AE memory-bound on 4090/Thor/Orin: {split}"
        ),
    )
}

fn leaderboard() -> Outcome {
    let cat = Catalog::bundled();
    let pi0 = cat.model("pi0").unwrap();
    let hw = cat.hardware_specs();
    let order = |mode| {
        select_platform(pi0, &cat.records, &hw, &Constraint::none(), &RankingPolicy::new(mode))
            .unwrap()
            .order()
            .join(",")
    };
    let (t, c, e) = (
        order(RankingMode::TimePriority),
        order(RankingMode::CostPriority),
        order(RankingMode::EnergyPriority),
    );
    let ovla = select_platform(
        cat.model("openvla").unwrap(),
        &cat.records,
        &hw,
        &Constraint::none(),
        &RankingPolicy::new(RankingMode::CET),
    )
    .unwrap();
    let oom = ovla
        .exclusion("310B")
        .is_some_and(|x| x.reasons.iter().any(|r| matches!(r, ExclusionReason::Oom { .. })));
    (
        t == "4090,Thor,B60,310P,Orin" && c == "B60,310P,Orin,Thor,4090" && e == "Thor,Orin,4090,310P,B60" && oom,
        format!("time [{t}], cost [{c}], energy [{e}]; OpenVLA on 310B OOM: {oom}"),
    )
}

fn dp_cache() -> Outcome {
    let started = Instant::now();
    let toy = ToyPolicy::reference();
    let seg = StableSegment::new(20, 80);
    let full = toy.full(false).unwrap();
    let s4 = toy.cached(&CacheConfig::new(4, seg)).unwrap();
    let s8 = toy.cached(&CacheConfig::new(8, seg)).unwrap();
    let s1 = toy.cached(&CacheConfig::new(1, seg)).unwrap();
    let counts = (s4.stats.skipped_steps, s4.stats.computed_steps, s8.stats.skipped_steps, s8.stats.computed_steps);
    let (r4, r8) = (s4.stats.step_reduction(), s8.stats.step_reduction());
    let identical = s1.action.iter().zip(&full.action).all(|(a, b)| a.to_bits() == b.to_bits());
    let dev = deviation(&full, &s4);

    let time = |f: &dyn Fn()| {
        (0..7)
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed()
            })
            .min()
            .unwrap()
    };
    let cfg = CacheConfig::new(4, seg);
    let t_full = time(&|| {
        toy.full(false).unwrap();
    });
    let t_s4 = time(&|| {
        toy.cached(&cfg).unwrap();
    });
    let wall = t_full.as_secs_f64() / t_s4.as_secs_f64();
    let elapsed = started.elapsed();
    (
        counts == (45, 55, 52, 48)
            && format!("{r4:.2}") == "1.82"
            && format!("{r8:.2}") == "2.08"
            && identical
            && wall >= DP_MIN_WALL_SPEEDUP
            && dev < DP_MAX_DEVIATION
            && elapsed < DP_BUDGET,
        format!(
            "S=4 {}/{} ({r4:.2}x), S=8 {}/{} ({r8:.2}x); S=1 bit-identical: {identical}; wall-clock {wall:.2}x (>= {DP_MIN_WALL_SPEEDUP}); deviation {dev:.4} (< {DP_MAX_DEVIATION}); {:.2} s",
            counts.0,
            counts.1,
            counts.2,
            counts.3,
            elapsed.as_secs_f64()
        ),
    )
}

fn fusion() -> Outcome {
    let started = Instant::now();
    let mut safe = true;

    let vla = ToyVla::reference(10, Pacing::Compute).unwrap();
    let constant: Vec<_> = ObservationStream::constant(ToyVla::OBS_DIM, 3).take(4).collect();
    let mut identical = true;
    for s in 0..=10 {
        let sched = FusionSchedule::new(10, s).unwrap();
        for workers in [Workers::Two, Workers::Single] {
            let b = benchmark_fusion(&vla, &constant, &sched, workers).unwrap();
            identical &= b.fused_traces.iter().zip(&b.sync_traces).all(|(f, y)| f.action == y.action);
            safe &= b.fused_traces.iter().all(|t| t.ordering_safe(s) && t.workers_consistent());
        }
    }

    let exact = predicted_speedup(1.0, 2.0, &FusionSchedule::new(10, 5).unwrap(), &ContentionModel::zero());

    let cat = Catalog::bundled();
    let pi0 = cat.model("pi0").unwrap();
    let preset = |hw: &str| {
        let spec = cat.hardware_spec(hw).unwrap();
        let cal = calibrate_overheads(&cat.records, pi0, &spec).unwrap();
        let (t_v, t_a) = phase_split(&SimConfig::calibrated(pi0.clone(), spec, &cal)).unwrap();
        let cm = cat.contention_for("pi0", hw).unwrap().contention;
        predicted_speedup(t_v, t_a, &FusionSchedule::default(), &cm)
    };
    let [g, o, b, t, p] = ["4090", "Orin", "B60", "Thor", "310P"].map(preset);
    let ordered = g > o && o > b.max(t) && b.min(t) > p && format!("{p:.2}") == "1.00";

    let sched = FusionSchedule::default();
    let paced = ToyVla::reference(10, Pacing::one_to_two(Duration::from_millis(20), 10)).unwrap();
    let obs: Vec<_> = ObservationStream::new(ToyVla::OBS_DIM, 0.05, 0).take(10).collect();
    let bench = benchmark_fusion(&paced, &obs, &sched, Workers::Two).unwrap();
    safe &= bench.fused_traces.iter().all(|t| t.ordering_safe(sched.stale_steps));
    let elapsed = started.elapsed();
    (
        identical && safe && exact == 1.5 && ordered && bench.speedup >= FUSION_MIN_SPEEDUP && elapsed < FUSION_BUDGET,
        format!(
            "identical obs bit-identical for s=0..10: {identical}; ordering safe: {safe}; predicted(1,2,5/10) = {exact}; presets 4090 {g:.2} > Orin {o:.2} > B60 {b:.2}/Thor {t:.2} > 310P {p:.2}: {ordered}; toy two-worker {:.2}x (>= {FUSION_MIN_SPEEDUP}); {:.1} s",
            bench.speedup,
            elapsed.as_secs_f64()
        ),
    )
}

fn simulator() -> Outcome {
    let cat = Catalog::bundled();
    let pi0 = cat.model("pi0").unwrap();
    let mut worst: f64 = 0.0;
    for r in cat.records_for("pi0") {
        let hw = cat.hardware_spec(&r.hardware).unwrap();
        let cal = calibrate_overheads(&cat.records, pi0, &hw).unwrap();
        let rep = run_sim(&SimConfig::calibrated(pi0.clone(), hw, &cal)).unwrap();
        worst = worst.max((rep.mean_latency_ms - r.latency_ms).abs());
    }
    let vlm = pi0.phase(PhaseRole::Backbone).unwrap();
    let ae = pi0.action_expert().unwrap();
    let ordered = cat
        .hardware_specs()
        .iter()
        .all(|h| utilization_proxy(vlm, h) > utilization_proxy(ae, h));
    let proxy = utilization_proxy(ae, &cat.hardware_spec("4090").unwrap());
    (
        worst <= ROUND_TRIP_MS && ordered && near(proxy, AE_PROXY_4090),
        format!(
            "worst round-trip error {worst:.2e} ms over 5 rows; proxy VLM > AE on all 6 devices: {ordered}; AE on 4090 {proxy:.4}"
        ),
    )
}

fn energy() -> Outcome {
    let kj = |csv: &str| energy_from_power_trace(&parse_power_csv(csv.as_bytes(), "trace").unwrap()).unwrap();
    let flat = kj("t_s,power_w\n0,100\n10,100\n");
    let ramp = kj("t_s,power_w\n0,0\n10,100\n");
    (
        (flat - 1.0).abs() <= ENERGY_TOL && (ramp - 0.5).abs() <= ENERGY_TOL,
        format!("100 W x 10 s = {flat:.3} kJ; 0->100 W ramp = {ramp:.3} kJ"),
    )
}

fn properties() -> Outcome {
    let cat = Catalog::bundled();
    let mut failures = Vec::new();
    let mut run = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };
    run(
        "skip count",
        runner(1024, 1)
            .run(&segment_case(), |(t, a, b, s)| check_skip_count(t, a, b, s))
            .map_err(|e| e.to_string()),
    );
    run(
        "scale invariance",
        runner(256, 2)
            .run(&(records(), 0.01..100.0f64), |(r, f)| check_scale_invariance(&r, f))
            .map_err(|e| e.to_string()),
    );
    run(
        "contention monotonicity",
        runner(512, 3)
            .run(
                &(1.0..500.0f64, 1.0..500.0f64, 0usize..=10, contention(), 0usize..4, 0.0..1.0f64),
                |(v, a, s, cm, w, b)| check_contention_monotone(v, a, s, cm, w, b),
            )
            .map_err(|e| e.to_string()),
    );
    run(
        "schedule dominance",
        runner(128, 4)
            .run(&dominance_case(), |case| check_schedule_dominance(&cat, case))
            .map_err(|e| e.to_string()),
    );
    let ok = failures.is_empty();
    (
        ok,
        if ok {
            "skip count (S 1..16), ranking scale invariance, contention monotonicity, schedule dominance: 1024/256/512/128 cases".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("roofline numerics", roofline),
        ("leaderboard orderings", leaderboard),
        ("dp-cache step arithmetic", dp_cache),
        ("fusion correctness and speedup", fusion),
        ("simulator round-trip", simulator),
        ("energy integration", energy),
        ("property suites", properties),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
