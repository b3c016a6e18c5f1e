use clap::{Args, Parser, Subcommand};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use vlaperf::api::{self, Format, RankRequest, SimInput, SimRequest, Tabular};
use vlaperf::catalog::{ingest_power_csv, Catalog};
use vlaperf::dpcache::{CacheConfig, StableSegment, ToyPolicy};
use vlaperf::fusion::FusionSchedule;
use vlaperf::leaderboard::{Constraint, Outcome, RankingMode, RankingPolicy, Weights};
use vlaperf::sim::Schedule;
use vlaperf::Error;

/// Deployment analysis for vision-language-action models.
#[derive(Parser)]
#[command(name = "vlaperf", version)]
struct Cli {
    /// Catalog directory; the bundled catalog when omitted.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[arg(long, global = true, default_value = "table")]
    format: Format,
    /// Seed for the toy sampler and observation stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ridge point and per-phase roofline placement.
    Roofline {
        #[arg(long)]
        hw: String,
        #[arg(long)]
        model: Option<String>,
    },
    /// Rank devices for a model under constraints.
    Rank(RankArgs),
    /// Simulate the control loop for a model on a device.
    Simulate(SimArgs),
    /// Profile the toy diffusion policy, then run it with step caching.
    Dpcache(DpCacheArgs),
    /// Run the two-worker fusion pipeline against the synchronous loop.
    Fuse(FuseArgs),
    /// Integrate a `t_s,power_w` CSV into energy.
    IngestPower { path: PathBuf },
    /// Serve the catalog over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

#[derive(Args)]
struct RankArgs {
    /// JSON request body, as posted to /api/rank. Overrides the other flags.
    #[arg(long, conflicts_with_all = ["model", "hz", "max_cost", "max_energy", "policy"])]
    request: Option<PathBuf>,
    #[arg(long, required_unless_present = "request")]
    model: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    hz: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    max_cost: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    max_energy: Option<f64>,
    #[arg(long, default_value = "cet")]
    policy: RankingMode,
    /// Composite weights as cost,energy,time.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<Weights>,
}

#[derive(Args)]
struct SimArgs {
    /// SimConfig or by-name request JSON, as posted to /api/simulate.
    #[arg(long, conflicts_with_all = ["model", "hw"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    model: Option<String>,
    #[arg(long, required_unless_present = "config")]
    hw: Option<String>,
    /// synchronous, dp-cache, fused or fused-cache.
    #[arg(long, default_value = "synchronous")]
    schedule: String,
    #[arg(long, default_value_t = 4)]
    period: usize,
    #[arg(long, value_parser = parse_segment, default_value = "20..80")]
    segment: StableSegment,
    /// Action expert steps per cycle for fused schedules.
    #[arg(long, default_value_t = vlaperf::fusion::DEFAULT_TOTAL_STEPS)]
    total_steps: usize,
    #[arg(long, default_value_t = vlaperf::fusion::DEFAULT_STALE_STEPS)]
    stale_steps: usize,
    #[arg(long, default_value_t = 10)]
    cycles: usize,
    /// Use raw roofline bounds instead of fitting overheads to measurements.
    #[arg(long)]
    no_calibrate: bool,
    /// Ignore the catalog contention preset.
    #[arg(long)]
    no_contention: bool,
    #[arg(long)]
    separate_vision: bool,
    /// Write the per-phase event log here.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct DpCacheArgs {
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 4)]
    period: usize,
    #[arg(long, default_value_t = vlaperf::dpcache::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Cache `start..end` instead of the profiled segment.
    #[arg(long, value_parser = parse_segment)]
    segment: Option<StableSegment>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long, default_value_t = 20)]
    cycles: usize,
    #[arg(long, default_value_t = vlaperf::fusion::DEFAULT_TOTAL_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = vlaperf::fusion::DEFAULT_STALE_STEPS)]
    stale_steps: usize,
    /// Run both phases on one worker.
    #[arg(long)]
    single: bool,
    /// Modeled backbone time per cycle; 0 runs unpaced.
    #[arg(long, default_value_t = 20.0)]
    backbone_ms: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Write the fused event log here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn parse_segment(s: &str) -> Result<StableSegment, String> {
    let (a, b) = s.split_once("..").ok_or("expected start..end")?;
    let start = a.trim().parse().map_err(|_| format!("bad start `{a}`"))?;
    let end = b.trim().parse().map_err(|_| format!("bad end `{b}`"))?;
    Ok(StableSegment::new(start, end))
}

fn parse_weights(s: &str) -> Result<Weights, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad weight `{x}`")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [cost, energy, time] => Ok(Weights { cost, energy, time }),
        _ => Err("expected cost,energy,time".into()),
    }
}

enum Failure {
    Invalid(String),
    Infeasible(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Calibration { .. } => Failure::Infeasible(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn body<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    api::from_str(&read(path)?).map_err(|e| Failure::Invalid(format!("{}: {}: {}", path.display(), e.field, e.message)))
}

fn print<T: Tabular>(v: &T, format: Format) {
    print!("{}", api::render(v, format));
}

fn schedule(a: &SimArgs) -> Result<Schedule, Failure> {
    let cache = CacheConfig::new(a.period, a.segment);
    let fusion = FusionSchedule::new(a.total_steps, a.stale_steps)?;
    Ok(match a.schedule.as_str() {
        "synchronous" | "sync" => Schedule::Synchronous,
        "dp-cache" | "dpcache" => Schedule::DpCache { cache },
        "fused" => Schedule::Fused { fusion },
        "fused-cache" => Schedule::FusedPlusCache { fusion, cache },
        other => return Err(Failure::Invalid(format!("unknown schedule `{other}`"))),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    let catalog = match &cli.catalog {
        Some(dir) => Catalog::load_dir(dir)?,
        None => Catalog::bundled(),
    };
    let format = cli.format;
    match cli.command {
        Command::Roofline { hw, model } => print(&api::roofline(&catalog, &hw, model.as_deref())?, format),
        Command::Rank(a) => {
            let req = match &a.request {
                Some(path) => body(path)?,
                None => RankRequest {
                    model: a.model.clone().expect("required by clap"),
                    constraint: Constraint {
                        required_hz: a.hz,
                        max_cost: a.max_cost,
                        max_energy: a.max_energy,
                    },
                    policy: RankingPolicy::with_weights(a.policy, a.weights.unwrap_or_default()),
                },
            };
            let rec = api::rank(&catalog, &req)?;
            print(&rec, format);
            if rec.outcome == Outcome::NoFeasiblePair {
                return Err(Failure::Infeasible(format!("no feasible device for {}", rec.model)));
            }
        }
        Command::Simulate(a) => {
            let input = match &a.config {
                Some(path) => {
                    let v: serde_json::Value = body(path)?;
                    SimInput::from_json(v).map_err(|e| Failure::Invalid(format!("{}: {}", e.field, e.message)))?
                }
                None => {
                    let mut req = SimRequest::new(
                        a.model.as_deref().expect("required by clap"),
                        a.hw.as_deref().expect("required by clap"),
                        schedule(&a)?,
                    );
                    req.n_cycles = a.cycles;
                    req.calibrate = !a.no_calibrate;
                    if a.no_contention {
                        req.contention = api::ContentionChoice::None;
                    }
                    req.separate_vision = a.separate_vision;
                    req.emit_events = a.events.is_some();
                    SimInput::Named(req)
                }
            };
            let mut report = api::simulate(&catalog, &input)?;
            if let (Some(path), Some(log)) = (&a.events, report.events.take()) {
                write(path, &log.to_csv())?;
            }
            print(&report, format);
        }
        Command::Dpcache(a) => {
            let req = api::DpCacheRequest {
                total_steps: a.steps,
                period: a.period,
                epsilon: a.epsilon,
                segment: a.segment,
                seed: Some(cli.seed.unwrap_or(ToyPolicy::NOISE_SEED)),
                repeats: a.repeats,
            };
            print(&api::dpcache(&req)?, format);
        }
        Command::Fuse(a) => {
            let req = api::FuseRequest {
                cycles: a.cycles,
                schedule: FusionSchedule::new(a.steps, a.stale_steps)?,
                two_workers: !a.single,
                backbone_ms: (a.backbone_ms != 0.0).then_some(a.backbone_ms),
                delta: a.delta,
                seed: cli.seed.unwrap_or(0),
            };
            let report = api::fuse(&req)?;
            if let Some(path) = &a.trace {
                write(path, &report.events.to_csv())?;
            }
            print(&report, format);
        }
        Command::IngestPower { path } => {
            let trace = ingest_power_csv(&path)?;
            print(&api::energy(&trace, &path.display().to_string())?, format);
        }
        Command::Serve { bind } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Invalid(e.to_string()))?;
            eprintln!("serving {} hardware, {} models on http://{bind}", catalog.hardware.len(), catalog.models.len());
            rt.block_on(vlaperf::service::serve(catalog, bind))
                .map_err(|e| Failure::Invalid(format!("{bind}: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(m)) => {
            eprintln!("{m}");
            ExitCode::from(2)
        }
    }
}
