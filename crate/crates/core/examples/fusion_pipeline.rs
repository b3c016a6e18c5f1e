//! Run the toy VLA synchronously and with the two-worker fused schedule,
//! then dump the fused timeline.

use std::time::Duration;
use vlaperf::fusion::{benchmark_fusion, event_log, FusionSchedule, ObservationStream, Pacing, ToyVla, Workers};

fn main() -> anyhow::Result<()> {
    let sched = FusionSchedule::default();
    let vla = ToyVla::reference(sched.total_steps, Pacing::one_to_two(Duration::from_millis(20), sched.total_steps))?;
    let obs: Vec<_> = ObservationStream::new(ToyVla::OBS_DIM, 0.05, 7).take(8).collect();

    for workers in [Workers::Single, Workers::Two] {
        let b = benchmark_fusion(&vla, &obs, &sched, workers)?;
        println!(
            "{workers:?}: synchronous {:.1} ms  fused {:.1} ms  speedup {:.2}x",
            b.synchronous_s * 1e3,
            b.fused_s * 1e3,
            b.speedup
        );
        if workers == Workers::Two {
            for t in &b.fused_traces[..3] {
                println!("  cycle {}  overlap {:.1} ms  safe {}", t.cycle, t.overlap() * 1e3, t.ordering_safe(sched.stale_steps));
            }
            print!("{}", event_log(&b.fused_traces[..2]).to_csv());
        }
    }
    Ok(())
}
