//! Place every phase of every bundled model on every device's roofline.

use vlaperf::catalog::Catalog;
use vlaperf::roofline::{classify_boundedness, operational_intensity, phase_latency_bound, ridge_point};

fn main() -> anyhow::Result<()> {
    let catalog = Catalog::bundled();
    for hw in catalog.hardware_specs() {
        println!("{}  ridge {:.1} FLOP/B  {:?}", hw.name, ridge_point(&hw), hw.tier());
        for model in &catalog.models {
            for phase in &model.phases {
                println!(
                    "  {:<18} {:<14} I = {:>8.2}  {:<13}  >= {:.2} ms",
                    model.name,
                    phase.name,
                    operational_intensity(phase),
                    classify_boundedness(phase, &hw).to_string(),
                    phase_latency_bound(phase, &hw, 0.0) * 1e3
                );
            }
        }
    }
    Ok(())
}
