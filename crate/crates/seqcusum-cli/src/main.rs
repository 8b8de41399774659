//! Command-line front end: `monitor`, `simulate`, `calibrate`, `lrv`.
//!
//! Exit codes: 0 success (or no alarm), 1 usage or configuration error,
//! 2 alarm raised by `monitor`, 3 data error. Reports go to stdout (or
//! `--output`), diagnostics to stderr.

mod series;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use seqcusum::calibrate::{brownian_quantile_unit_interval, calibrate, CalibrationConfig};
use seqcusum::detector::{DetectorKind, ThresholdSpec};
use seqcusum::lrv::long_run_variance;
use seqcusum::monitor::{Monitor, MonitorConfig, QuantileSource, RunReport};
use seqcusum::param::ParameterKind;
use seqcusum::sim::{
    run_level_experiment, run_power_experiment, DetectorCell, ExperimentConfig, ModelId,
    ShiftSpec,
};
use seqcusum::table::QuantileTable;
use seqcusum::Error;
use std::path::{Path, PathBuf};

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_ALARM: i32 = 2;
const EXIT_DATA: i32 = 3;

/// Environment variable supplying the default quantile-table path.
const TABLE_ENV: &str = "SEQCUSUM_TABLE";

#[derive(Parser)]
#[command(name = "seqcusum", version, about = "Open-end sequential change-point detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monitor a CSV column for a change; exits 2 on alarm.
    Monitor(MonitorArgs),
    /// Replicated level or power experiments over the built-in models.
    Simulate(SimulateArgs),
    /// Estimate limiting quantiles by Monte Carlo.
    Calibrate(CalibrateArgs),
    /// Long-run variance of a CSV column.
    Lrv(LrvArgs),
}

#[derive(Args)]
struct MonitorArgs {
    /// Detector statistic: R, S, T, E or Q.
    #[arg(long)]
    detector: String,
    #[arg(long, default_value_t = 0.001)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Learning-sample size: the first m rows of the input.
    #[arg(long)]
    m: usize,
    /// CSV file with the series.
    #[arg(long)]
    input: PathBuf,
    /// Column selector: 0-based index or header name.
    #[arg(long, default_value = "0")]
    column: String,
    /// Quantile table (default: $SEQCUSUM_TABLE, else the shipped table).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Explicit critical quantile, overriding the table.
    #[arg(long)]
    quantile: Option<f64>,
    /// Monitored parameter: mean (default), variance, or quantile:<p>.
    #[arg(long)]
    parameter: Option<String>,
    /// Explicit long-run standard deviation, overriding estimation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Report format; `monitor` emits json.
    #[arg(long, default_value = "json")]
    output_format: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Data-generating model M1..M10.
    #[arg(long)]
    model: String,
    #[arg(long)]
    m: usize,
    /// Total horizon, learning sample included.
    #[arg(long)]
    n: usize,
    /// Change position (1-based); requires --delta.
    #[arg(long)]
    kstar: Option<usize>,
    /// Shift added after --kstar; requires --kstar.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma list of cells kind:eta:gamma:alpha, e.g. T:0.001:0:0.05.
    #[arg(long)]
    detectors: String,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Report format; `simulate` emits csv.
    #[arg(long, default_value = "csv")]
    output_format: String,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Detector statistic: R, S, T (path simulation) or E, Q (Brownian).
    #[arg(long)]
    detector: String,
    #[arg(long, default_value_t = 0.001)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Comma list of significance levels.
    #[arg(long, default_value = "0.01,0.05,0.1")]
    alphas: String,
    /// Simulated learning-sample size (R/S/T only).
    #[arg(long)]
    m_sim: Option<usize>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    p_min: Option<u32>,
    #[arg(long)]
    p_max: Option<u32>,
    /// Grid resolution for the E/Q Brownian limits.
    #[arg(long, default_value_t = 8192)]
    grid_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the full-scale defaults (m_sim 500, 15000 paths, p up to 18).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Report format; `calibrate` emits csv.
    #[arg(long, default_value = "csv")]
    output_format: String,
}

#[derive(Args)]
struct LrvArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "0")]
    column: String,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Report format; `lrv` emits json.
    #[arg(long, default_value = "json")]
    output_format: String,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Monitor(args) => cmd_monitor(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Lrv(args) => cmd_lrv(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Precondition(_)
        | Error::Calibration(_)
        | Error::State(_)
        | Error::UnsupportedNormalization(_)
        | Error::MissingQuantile(_) => EXIT_USAGE,
        Error::Data(_) | Error::DegenerateData(_) | Error::Parse { .. } | Error::Io(_) => {
            EXIT_DATA
        }
    }
}

fn check_format(given: &str, expected: &str) -> Result<(), Error> {
    if given == expected {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "this command reports as {expected}, not {given:?}"
        )))
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Error> {
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn resolve_table(flag: Option<&Path>) -> Result<QuantileTable, Error> {
    if let Some(path) = flag {
        return QuantileTable::load(path);
    }
    if let Ok(path) = std::env::var(TABLE_ENV) {
        return QuantileTable::load(Path::new(&path));
    }
    Ok(QuantileTable::shipped())
}

fn parse_alphas(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad significance level {s:?}")))
        })
        .collect()
}

fn cmd_monitor(args: MonitorArgs) -> Result<i32, Error> {
    check_format(&args.output_format, "json")?;
    let kind = DetectorKind::parse(&args.detector)?;
    let spec = ThresholdSpec::new(kind, args.eta, args.gamma)?;
    if args.m < 4 {
        return Err(Error::Config(format!(
            "the learning sample needs at least 4 observations, got m = {}",
            args.m
        )));
    }

    let values = series::parse_series(&args.input, &args.column)?;
    if values.len() <= args.m {
        return Err(Error::Data(format!(
            "input holds {} observations, not enough for m = {} plus monitoring",
            values.len(),
            args.m
        )));
    }

    let table = resolve_table(args.table.as_deref())?;
    let mut config = MonitorConfig::new(
        spec,
        args.alpha,
        match args.quantile {
            Some(q) => QuantileSource::Explicit(q),
            None => QuantileSource::Table,
        },
    );
    if let Some(p) = &args.parameter {
        config = config.with_parameter(ParameterKind::parse(p)?);
    }
    if let Some(s) = args.sigma {
        config = config.with_sigma(s);
    }

    let mut monitor = Monitor::new(config, &values[..args.m], &table)?;
    for w in monitor.warnings() {
        eprintln!("warning: {w}");
    }
    let report = monitor.run_stream(values[args.m..].iter().copied())?;

    let (json, code) = match report {
        RunReport::Alarm(a) => (
            serde_json::json!({
                "alarm_index": a.alarm_index,
                "change_point": a.change_point_estimate,
                "normalized": a.normalized,
                "quantile": a.quantile,
                "sigma": monitor.sigma(),
                "consumed": a.consumed,
            }),
            EXIT_ALARM,
        ),
        RunReport::NoAlarm {
            max_normalized,
            consumed,
            ..
        } => (
            serde_json::json!({
                "alarm_index": serde_json::Value::Null,
                "change_point": serde_json::Value::Null,
                "normalized": max_normalized,
                "quantile": monitor.quantile(),
                "sigma": monitor.sigma(),
                "consumed": consumed,
            }),
            EXIT_OK,
        ),
    };
    emit(
        &format!("{}\n", serde_json::to_string_pretty(&json).expect("valid json")),
        args.output.as_deref(),
    )?;
    Ok(code)
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32, Error> {
    check_format(&args.output_format, "csv")?;
    let model = ModelId::parse(&args.model)?;
    let detectors: Vec<DetectorCell> = args
        .detectors
        .split(',')
        .map(DetectorCell::parse)
        .collect::<Result<_, _>>()?;
    let shift = match (args.kstar, args.delta) {
        (Some(k_star), Some(delta)) => Some(ShiftSpec { k_star, delta }),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "--kstar and --delta must be given together".to_string(),
            ))
        }
    };
    let config = ExperimentConfig {
        model,
        m: args.m,
        n: args.n,
        shift,
        detectors,
        replications: args.reps,
        seed: args.seed,
    };
    let table = resolve_table(args.table.as_deref())?;
    let result = if shift.is_some() {
        run_power_experiment(&config, &table)?
    } else {
        run_level_experiment(&config, &table)?
    };
    emit(&result.to_csv(), args.output.as_deref())?;
    Ok(EXIT_OK)
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<i32, Error> {
    check_format(&args.output_format, "csv")?;
    let kind = DetectorKind::parse(&args.detector)?;
    let alphas = parse_alphas(&args.alphas)?;
    let spec = ThresholdSpec::new(kind, args.eta, args.gamma)?;

    let entries = match kind {
        DetectorKind::E | DetectorKind::Q => {
            let n_paths = args.n_paths.unwrap_or(100_000);
            alphas
                .iter()
                .map(|&alpha| {
                    brownian_quantile_unit_interval(
                        kind,
                        args.gamma,
                        alpha,
                        args.grid_size,
                        n_paths,
                        args.seed,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        _ => {
            let mut config = if args.full_scale {
                CalibrationConfig::full_scale(spec, alphas, args.seed)
            } else {
                CalibrationConfig::desk(spec, alphas, args.seed)
            };
            if let Some(m_sim) = args.m_sim {
                config.m_sim = m_sim;
            }
            if let Some(n_paths) = args.n_paths {
                config.n_paths = n_paths;
            }
            if let Some(p_min) = args.p_min {
                config.p_min = p_min;
            }
            if let Some(p_max) = args.p_max {
                config.p_max = p_max;
            }
            calibrate(&config)?
        }
    };
    let table = QuantileTable::new(entries)?;
    emit(&table.to_csv(), args.output.as_deref())?;
    Ok(EXIT_OK)
}

fn cmd_lrv(args: LrvArgs) -> Result<i32, Error> {
    check_format(&args.output_format, "json")?;
    let values = series::parse_series(&args.input, &args.column)?;
    let est = long_run_variance(&values)?;
    if est.floored {
        eprintln!("warning: kernel estimate was non-positive; floored at {}", est.sigma2);
    }
    let json = serde_json::json!({
        "sigma2": est.sigma2,
        "sigma": est.sigma,
        "bandwidth": est.bandwidth,
        "m": est.m,
    });
    emit(
        &format!("{}\n", serde_json::to_string_pretty(&json).expect("valid json")),
        args.output.as_deref(),
    )?;
    Ok(EXIT_OK)
}
