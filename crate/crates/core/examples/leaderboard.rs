//! Rank the measured pi0 deployments under each policy, then tighten the
//! frequency requirement until nothing qualifies.

use vlaperf::catalog::Catalog;
use vlaperf::leaderboard::{select_platform, Constraint, RankingMode, RankingPolicy};

fn main() -> anyhow::Result<()> {
    let catalog = Catalog::bundled();
    let model = catalog.model("pi0")?;
    let hw = catalog.hardware_specs();

    for mode in RankingMode::ALL {
        let rec = select_platform(model, &catalog.records, &hw, &Constraint::none(), &RankingPolicy::new(mode))?;
        println!("{:<15} {}", format!("{mode:?}"), rec.order().join(" > "));
    }

    let cet = RankingPolicy::new(RankingMode::CET);
    for hz in [1.0, 2.0, 5.0, 10.0] {
        let rec = select_platform(model, &catalog.records, &hw, &Constraint::hz(hz), &cet)?;
        let out: Vec<_> = rec.excluded.iter().map(|x| x.hardware.as_str()).collect();
        println!("{hz:>4} Hz  feasible [{}]  excluded [{}]", rec.order().join(", "), out.join(", "));
    }
    Ok(())
}
