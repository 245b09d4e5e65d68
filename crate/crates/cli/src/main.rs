//! `gsr`: calibrate thresholds, scan CSV streams, run power studies and
//! evaluate power bounds.
//!
//! Exit codes: 0 success, 2 usage or malformed input, 3 calibration
//! infeasible (`K · alpha < 1`), 4 incompatible inputs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gsr_core::calibration::{CalibrationConfig, StatisticKind, ThresholdTable};
use gsr_core::detector::{AlphaAllocation, Detector, DetectorConfig, PostDetectionPolicy, ThresholdSource};
use gsr_core::io::{write_events_jsonl, CsvOptions, StreamFile};
use gsr_core::power::{delta_sigma, empirical_power, mu_constants, Direction, PowerEstimate};
use gsr_core::sim::{
    run_online_power, run_static_power, static_power_grid, write_contour_csv, ChangeKind, OnlinePowerConfig,
    OnlineThresholds, StaticPowerConfig,
};
use gsr_core::{allocate_alphas, calibrate_monte_carlo, delta_mu, minimum_radius, GsrError, PowerQuery};

#[derive(Parser)]
#[command(name = "gsr", version, about = "Graph spanning ratio change-point detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo thresholds for the maximum over a scanning zone.
    Calibrate(CalibrateArgs),
    /// Scan a CSV stream and write detection events as JSON lines.
    Detect(DetectArgs),
    /// Detection power studies on simulated Gaussian data.
    Simulate {
        #[command(subcommand)]
        study: SimulateCommand,
    },
    /// Evaluate the power bounds and the minimum radius.
    Power(PowerArgs),
}

fn probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(format!("{p} is not in (0, 1)"))
    }
}

fn half_length(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n >= 2 {
        Ok(n)
    } else {
        Err(format!("window half-length {n} < 2"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(format!("{e}")),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("{x} is not a positive number"))
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_parser = positive_usize)]
    dim: usize,
    /// Window half-lengths, comma separated.
    #[arg(long, value_delimiter = ',', required = true, value_parser = half_length)]
    windows: Vec<usize>,
    #[arg(long, default_value_t = 0.06, value_parser = probability)]
    alpha_total: f64,
    #[arg(long, default_value_t = CalibrationConfig::DEFAULT_REPLICATIONS, value_parser = positive_usize)]
    reps: usize,
    /// Length of each simulated sequence [default: 6 · max window].
    #[arg(long, value_parser = positive_usize)]
    zone_length: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Halt,
    Cooldown,
    Continue,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Threshold table written by `calibrate`.
    #[arg(long, conflicts_with = "analytic", required_unless_present = "analytic")]
    thresholds: Option<PathBuf>,
    /// Use single-point Fisher thresholds instead of a table.
    #[arg(long)]
    analytic: bool,
    /// Window half-lengths; required with --analytic, a subset of the table otherwise.
    #[arg(long, value_delimiter = ',', value_parser = half_length, required_if_eq("analytic", "true"))]
    windows: Vec<usize>,
    /// Total level for --analytic.
    #[arg(long, default_value_t = 0.06, value_parser = probability)]
    alpha_total: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Cooldown)]
    policy: PolicyArg,
    /// Ticks suppressed after an event [default: 2 · max window].
    #[arg(long)]
    cooldown: Option<usize>,
    /// Event file [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input holds prices; scan their log returns.
    #[arg(long)]
    log_returns: bool,
    /// The first column is a time stamp (detected automatically for non-numeric stamps).
    #[arg(long)]
    time_column: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChangeArg {
    None,
    Mean,
    Variance,
}

#[derive(Args)]
struct ChangeArgs {
    #[arg(long, value_enum, default_value_t = ChangeArg::Mean)]
    change: ChangeArg,
    /// Mean shift per coordinate [default: d^(-1/3)].
    #[arg(long)]
    delta: Option<f64>,
    /// Post-change covariance factor c in c · I.
    #[arg(long, default_value_t = 2.0, value_parser = positive_f64)]
    variance_factor: f64,
}

impl ChangeArgs {
    fn kind(&self, d: usize) -> Result<ChangeKind, CliError> {
        Ok(match self.change {
            ChangeArg::None => ChangeKind::None,
            ChangeArg::Mean => match self.delta {
                Some(delta) if delta.is_finite() => ChangeKind::Mean(delta),
                Some(delta) => return Err(CliError::usage(format!("--delta {delta} is not finite"))),
                None => ChangeKind::mean_cube_root(d),
            },
            ChangeArg::Variance => ChangeKind::Variance(self.variance_factor),
        })
    }
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Single-window test on samples of length 2n changed at n.
    Static(StaticArgs),
    /// Online detector on streams of fixed length.
    Online(OnlineArgs),
    /// Static power over a (d, n) grid as CSV.
    Contour(ContourArgs),
}

#[derive(Args)]
struct StaticArgs {
    #[arg(long, value_parser = positive_usize)]
    dim: usize,
    #[arg(long, value_parser = half_length)]
    n: usize,
    #[command(flatten)]
    change: ChangeArgs,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Total level, split over the three statistics.
    #[arg(long, default_value_t = 0.05, value_parser = probability)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OnlineArgs {
    #[arg(long, value_parser = positive_usize)]
    dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "20,35,50", value_parser = half_length)]
    windows: Vec<usize>,
    #[command(flatten)]
    change: ChangeArgs,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0.06, value_parser = probability)]
    alpha_total: f64,
    #[arg(long, default_value_t = 100)]
    stream_length: usize,
    #[arg(long, default_value_t = 50)]
    change_at: usize,
    /// Monte Carlo replications for the thresholds.
    #[arg(long, default_value_t = 4000, value_parser = positive_usize)]
    reps: usize,
    /// Use single-point Fisher thresholds.
    #[arg(long)]
    analytic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ContourArgs {
    #[arg(long, value_delimiter = ',', required = true, value_parser = positive_usize)]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true, value_parser = half_length)]
    ns: Vec<usize>,
    #[command(flatten)]
    change: ChangeArgs,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0.05, value_parser = probability)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, value_parser = half_length)]
    n: usize,
    #[arg(long, value_parser = positive_usize)]
    d: usize,
    #[arg(long, default_value_t = 0.05, value_parser = probability)]
    alpha: f64,
    /// Target type-II errors, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1", value_parser = probability)]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.0)]
    mu_left: f64,
    #[arg(long, default_value_t = 0.0)]
    mu_right: f64,
    /// Also estimate the power of a mean shift sized exactly at the bound.
    #[arg(long)]
    empirical_reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<GsrError> for CliError {
    fn from(e: GsrError) -> Self {
        let code = match e {
            GsrError::QuantileUnresolvable { .. } => 3,
            GsrError::Incompatible(_) | GsrError::DimensionMismatch { .. } | GsrError::Json(_) => 4,
            _ => 2,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut out = open_output(path)?;
    let text = serde_json::to_string_pretty(value).map_err(GsrError::from)?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let alphas = allocate_alphas(args.alpha_total, &StatisticKind::ALL, &args.windows)?;
    let mut config = CalibrationConfig::new(args.dim, alphas);
    config.replications = args.reps;
    config.seed = args.seed;
    if let Some(z) = args.zone_length {
        config.zone_length = z;
    }
    let table = calibrate_monte_carlo(&config)?;
    table.write(&args.out)?;
    let mut stdout = io::stdout().lock();
    for e in &table.entries {
        writeln!(stdout, "{:<11} n={:<4} rho={:.6} alpha={:.6}", e.kind, e.n, e.rho, e.alpha)?;
    }
    writeln!(stdout, "wrote {} entries to {}", table.entries.len(), args.out.display())?;
    Ok(())
}

fn detect(args: DetectArgs) -> Result<(), CliError> {
    let options = CsvOptions { has_header: None, time_column: args.time_column.then_some(true) };
    let mut stream = StreamFile::read(&args.input, options)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.input.display())))?;
    if args.log_returns {
        stream = stream.log_returns()?;
    }
    if stream.is_empty() {
        return Err(CliError::usage(format!("{}: no observations", args.input.display())));
    }
    let d = stream.dimension();
    let config = match &args.thresholds {
        Some(path) => {
            let table = ThresholdTable::read(path).map_err(|e| match e {
                GsrError::Io(io) => CliError::usage(format!("{}: {io}", path.display())),
                other => other.into(),
            })?;
            if table.dimension != d {
                return Err(CliError::from(GsrError::Incompatible(format!(
                    "threshold table is for dimension {}, {} has {d} columns",
                    table.dimension,
                    args.input.display()
                ))));
            }
            let all = AlphaAllocation::from_table(&table)?;
            let alphas = if args.windows.is_empty() {
                all
            } else {
                for &n in &args.windows {
                    if !all.windows().contains(&n) {
                        return Err(CliError::from(GsrError::Incompatible(format!(
                            "threshold table has no entries for window {n}"
                        ))));
                    }
                }
                AlphaAllocation::from_cells(all.iter().filter(|((_, n), _)| args.windows.contains(n)))?
            };
            DetectorConfig {
                dimension: d,
                alphas,
                thresholds: ThresholdSource::Table(table),
                policy: PostDetectionPolicy::Halt,
            }
        }
        None => DetectorConfig::new(d, &args.windows, args.alpha_total)?,
    };
    let max_n = config.alphas.windows().into_iter().max().unwrap_or(0);
    let policy = match args.policy {
        PolicyArg::Halt => PostDetectionPolicy::Halt,
        PolicyArg::Continue => PostDetectionPolicy::Continue,
        PolicyArg::Cooldown => PostDetectionPolicy::Cooldown(args.cooldown.unwrap_or(2 * max_n)),
    };
    let mut detector = Detector::new(config.with_policy(policy))?;
    let events = detector.run(&stream.rows)?;
    write_events_jsonl(open_output(args.out.as_deref())?, &events)?;
    eprintln!("{} events in {} observations", events.len(), stream.len());
    Ok(())
}

#[derive(Serialize)]
struct StudyOutput<'a, C: Serialize> {
    version: u32,
    study: &'static str,
    config: C,
    report: &'a gsr_core::PowerReport,
}

#[derive(Serialize)]
struct StaticSummary {
    dimension: usize,
    n: usize,
    change: ChangeKind,
    samples: usize,
    alpha: f64,
    seed: u64,
}

#[derive(Serialize)]
struct OnlineSummary {
    dimension: usize,
    windows: Vec<usize>,
    change: ChangeKind,
    samples: usize,
    alpha_total: f64,
    stream_length: usize,
    change_at: usize,
    thresholds: OnlineThresholds,
    seed: u64,
}

fn simulate(study: SimulateCommand) -> Result<(), CliError> {
    match study {
        SimulateCommand::Static(a) => {
            let change = a.change.kind(a.dim)?;
            let mut cfg = StaticPowerConfig::new(a.dim, a.n, change, a.samples, a.alpha);
            cfg.seed = a.seed;
            let report = run_static_power(&cfg)?;
            let summary =
                StaticSummary { dimension: a.dim, n: a.n, change, samples: a.samples, alpha: a.alpha, seed: a.seed };
            write_json(a.out.as_deref(), &StudyOutput { version: 1, study: "static", config: summary, report: &report })
        }
        SimulateCommand::Online(a) => {
            let change = a.change.kind(a.dim)?;
            let mut cfg = OnlinePowerConfig::new(a.dim, change, a.samples);
            cfg.windows = a.windows;
            cfg.alpha_total = a.alpha_total;
            cfg.stream_length = a.stream_length;
            cfg.change_at = a.change_at;
            cfg.seed = a.seed;
            cfg.thresholds = if a.analytic {
                OnlineThresholds::Analytic
            } else {
                OnlineThresholds::MonteCarlo { replications: a.reps }
            };
            let report = run_online_power(&cfg)?;
            let summary = OnlineSummary {
                dimension: cfg.dimension,
                windows: cfg.windows.clone(),
                change,
                samples: cfg.samples,
                alpha_total: cfg.alpha_total,
                stream_length: cfg.stream_length,
                change_at: cfg.change_at,
                thresholds: cfg.thresholds,
                seed: cfg.seed,
            };
            write_json(a.out.as_deref(), &StudyOutput { version: 1, study: "online", config: summary, report: &report })
        }
        SimulateCommand::Contour(a) => {
            for &d in &a.dims {
                a.change.kind(d)?;
            }
            let rows =
                static_power_grid(&a.dims, &a.ns, |d| a.change.kind(d).expect("checked"), a.samples, a.alpha, a.seed)?;
            let mut out = open_output(a.out.as_deref())?;
            write_contour_csv(&mut out, &rows)?;
            out.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct BoundRow {
    beta: f64,
    c1: f64,
    c2: f64,
    delta_mu: f64,
    delta_sigma_plus: f64,
    delta_sigma_minus: f64,
    minimum_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical: Option<PowerEstimate>,
}

#[derive(Serialize)]
struct PowerOutput {
    version: u32,
    n: usize,
    d: usize,
    alpha: f64,
    sigma2: f64,
    mu_left: f64,
    mu_right: f64,
    bounds: Vec<BoundRow>,
}

fn power(a: PowerArgs) -> Result<(), CliError> {
    let mut bounds = Vec::with_capacity(a.beta.len());
    for &beta in &a.beta {
        let mut q = PowerQuery::new(a.n, a.d, a.alpha, beta, a.sigma2);
        q.mu_left = a.mu_left;
        q.mu_right = a.mu_right;
        let c = mu_constants(&q)?;
        let dm = delta_mu(&q)?;
        let empirical = match a.empirical_reps {
            Some(reps) => Some(empirical_power(&q.with_mu_rem(dm), reps, a.seed)?),
            None => None,
        };
        bounds.push(BoundRow {
            beta,
            c1: c.c1,
            c2: c.c2,
            delta_mu: dm,
            delta_sigma_plus: delta_sigma(&q, Direction::Plus)?,
            delta_sigma_minus: delta_sigma(&q, Direction::Minus)?,
            minimum_radius: (beta < 1.0 - a.alpha)
                .then(|| minimum_radius(a.n, a.d, a.alpha, beta, a.sigma2))
                .transpose()?,
            empirical,
        });
    }
    write_json(
        a.out.as_deref(),
        &PowerOutput {
            version: 1,
            n: a.n,
            d: a.d,
            alpha: a.alpha,
            sigma2: a.sigma2,
            mu_left: a.mu_left,
            mu_right: a.mu_right,
            bounds,
        },
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Detect(a) => detect(a),
        Command::Simulate { study } => simulate(study),
        Command::Power(a) => power(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
