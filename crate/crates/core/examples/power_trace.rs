//! Integrate a power trace into energy per episode.
//!
//! ```text
//! cargo run --example power_trace -- trace.csv
//! ```
//! Without an argument a synthetic 30 s trace is used.

use std::path::PathBuf;
use vlaperf::catalog::{ingest_power_csv, parse_power_csv};
use vlaperf::leaderboard::energy_from_power_trace;

fn main() -> anyhow::Result<()> {
    let trace = match std::env::args().nth(1) {
        Some(p) => ingest_power_csv(&PathBuf::from(p))?,
        None => {
            let mut csv = String::from("t_s,power_w\n");
            for i in 0..=300 {
                let t = i as f64 * 0.1;
                // idle, then a burst of inference
                let w = if (10.0..20.0).contains(&t) { 280.0 } else { 60.0 };
                csv.push_str(&format!("{t},{w}\n"));
            }
            parse_power_csv(csv.as_bytes(), "synthetic")?
        }
    };
    let kj = energy_from_power_trace(&trace)?;
    let span = trace.last().unwrap().t_s - trace[0].t_s;
    println!("{} samples, {span:.1} s, {kj:.3} kJ, mean {:.1} W", trace.len(), kj * 1e3 / span);
    Ok(())
}
