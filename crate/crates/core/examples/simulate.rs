//! Simulate pi0 on each device under all four schedules, with overheads
//! fitted to the measured latency.

use vlaperf::catalog::Catalog;
use vlaperf::dpcache::{CacheConfig, StableSegment};
use vlaperf::fusion::{ContentionModel, FusionSchedule};
use vlaperf::sim::{calibrate_overheads, run_sim, Schedule, SimConfig};

fn main() -> anyhow::Result<()> {
    let catalog = Catalog::bundled();
    let model = catalog.model("pi0")?;
    let fusion = FusionSchedule::default();
    let cache = CacheConfig::new(2, StableSegment::new(2, 8));
    let schedules = [
        Schedule::Synchronous,
        Schedule::DpCache { cache },
        Schedule::Fused { fusion },
        Schedule::FusedPlusCache { fusion, cache },
    ];
    for hw in catalog.hardware_specs() {
        let Ok(cal) = calibrate_overheads(&catalog.records, model, &hw) else {
            continue;
        };
        let contention = catalog.contention_for(&model.name, &hw.name).map_or(ContentionModel::zero(), |p| p.contention);
        print!("{:<5} measured {:>6.1} ms |", hw.name, cal.measured_ms);
        for s in schedules {
            let cfg = SimConfig::calibrated(model.clone(), hw.clone(), &cal)
                .with_schedule(s)
                .with_contention(contention);
            let r = run_sim(&cfg)?;
            print!(" {} {:.1}", s.name(), r.mean_latency_ms);
        }
        println!();
    }
    Ok(())
}
