//! Profile the toy diffusion policy, then sweep the cache period.

use vlaperf::dpcache::{deviation, l1_rel_series, profile_stability, CacheConfig, Signal, ToyPolicy};

fn main() -> anyhow::Result<()> {
    let toy = ToyPolicy::reference();
    let profile = toy.full(true)?;
    let series = l1_rel_series(&profile, Signal::ModelOutput)?;
    let segment = profile_stability(&profile, 0.05)?;
    println!("stable segment [{}, {}) of {}", segment.start, segment.end, series.len() + 1);
    for (i, v) in series.iter().enumerate().step_by(10) {
        println!("  step {i:>3}  L1_rel {v:.4}");
    }

    for period in [1, 2, 4, 8, 16] {
        let cached = toy.cached(&CacheConfig::new(period, segment))?;
        println!(
            "S = {period:>2}  computed {:>3}  reduction {:.2}x  deviation {:.2e}",
            cached.stats.computed_steps,
            cached.stats.step_reduction(),
            deviation(&profile, &cached)
        );
    }
    Ok(())
}
