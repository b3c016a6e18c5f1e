//! Fit per-device contention levels to the published fused speedups and
//! print them in the `contention.json` catalog format.
//!
//! ```text
//! cargo run --example calibrate_contention > crates/core/data/contention.json
//! ```

use vlaperf::catalog::Catalog;
use vlaperf::fusion::{predicted_speedup, FusionSchedule};
use vlaperf::sim::{calibrate_overheads, phase_split, SimConfig};

fn main() -> anyhow::Result<()> {
    let catalog = Catalog::bundled();
    let presets = catalog.fit_contention()?;
    for p in &presets {
        let model = catalog.model(&p.model)?;
        let hw = catalog.hardware_spec(&p.hardware)?;
        let cal = calibrate_overheads(&catalog.records, model, &hw)?;
        let (t_vlm, t_ae) = phase_split(&SimConfig::calibrated(model.clone(), hw, &cal))?;
        let check = predicted_speedup(t_vlm, t_ae, &FusionSchedule::default(), &p.contention);
        eprintln!(
            "{:>5}  backbone {:7.2} ms  expert {:7.2} ms  level {:.4}  speedup {:.3} (target {:.2})",
            p.hardware,
            t_vlm * 1e3,
            t_ae * 1e3,
            p.level,
            check,
            p.target_speedup
        );
    }
    println!("{}", serde_json::to_string_pretty(&presets)?);
    Ok(())
}
