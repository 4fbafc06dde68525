//! `imufuse` command-line interface.
//!
//! Failures print one line `error: <class>: <message>` to stderr and exit
//! with status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use imufuse::allan::{allan_deviation, log_spaced_clusters};
use imufuse::calibration::{map_bias_filtering, map_bias_smoothing, ml_bias_estimate, BiasEstimate, BiasFilter};
use imufuse::config::{load_config, RunConfig};
use imufuse::estimators::{Algorithm, EstimatorConfig};
use imufuse::io;
use imufuse::metrics::{reference_error, ErrorTrace, RmseSummary};
use imufuse::simulator::{simulate, MeasurementSeries, ScenarioKind};
use imufuse::studies::{monte_carlo, StudyId, SCHEMA_VERSION};
use imufuse::{Error, Result};

#[derive(Parser)]
#[command(name = "imufuse", version, about = "Orientation and pose estimation from inertial sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write measurements and ground truth.
    Simulate(SimulateArgs),
    /// Run an estimator on a measurement file.
    Estimate(EstimateArgs),
    /// Compare an estimate with ground truth.
    Error(ErrorArgs),
    /// Run a Monte Carlo study.
    Montecarlo(MonteCarloArgs),
    /// Estimate the gyroscope bias of a measurement file.
    Calibrate(CalibrateArgs),
    /// Allan deviation of the gyroscope or accelerometer.
    Allan(AllanArgs),
    /// Emit long-format CSV for plotting.
    Plotdata(PlotArgs),
}

#[derive(Args)]
struct Common {
    /// Configuration file with `[section]` and `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// orientation, orientation-mag-disturbed, pose-stationary, pose-const-acc or pose-rand-acc:<variance>.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Drop the magnetometer columns from the output.
    #[arg(long)]
    no_mag: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Alg {
    Smooth,
    FiltOpt,
    EkfQuat,
    EkfDev,
    Compl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Orientation,
    Pose,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    alg: Option<Alg>,
    #[arg(long, value_enum, default_value = "orientation")]
    mode: Mode,
    #[arg(long)]
    no_mag: bool,
    #[arg(long)]
    estimate_bias: bool,
    /// Blend weight of the complementary filter.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ErrorArgs {
    /// Estimated trajectory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Per-sample errors as long-format CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MonteCarloArgs {
    /// T4.2, T4.4, T4.5, T4.6, T5.1 or T5.2.
    #[arg(long)]
    table: String,
    /// Defaults to the standard run count of the study.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON result document.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ml,
    MapSmooth,
    MapFiltOpt,
    MapEkfQuat,
    MapEkfDev,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "ml")]
    method: Method,
    #[arg(long)]
    no_mag: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sensor {
    Gyr,
    Acc,
}

#[derive(Args)]
struct AllanArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "gyr")]
    sensor: Sensor,
    /// Shortest cluster time, s.
    #[arg(long)]
    tmin: Option<f64>,
    /// Longest cluster time, s. Defaults to a tenth of the record.
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Errors,
    Sigma,
    BiasConvergence,
    Allan,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Estimated trajectory, or measurements for the allan kind.
    #[arg(long = "in")]
    input: PathBuf,
    /// Ground truth, needed by the errors kind.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Estimator configuration for a loaded series: the sample period comes
/// from the file.
fn estimator_for(cfg: &RunConfig, meas: &MeasurementSeries, no_mag: bool) -> EstimatorConfig {
    let mut e = cfg.estimator.clone();
    e.env.sample_period = meas.sample_period;
    if no_mag {
        e.use_mag = false;
    }
    e
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let mut cfg = run_config(&a.common)?;
    if let Some(s) = &a.scenario {
        cfg.scenario.kind = ScenarioKind::parse(s)?;
    }
    if let Some(seed) = a.seed {
        cfg.scenario.seed = seed;
    }
    let (truth, meas) = simulate(&cfg.scenario)?;
    let meas = if a.no_mag { meas.without_mag() } else { meas };
    io::save_measurements(&a.out, &meas)?;
    if let Some(t) = &a.truth {
        io::save_truth(t, &truth, meas.t0, cfg.scenario.kind.is_pose())?;
    }
    Ok(())
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    let cfg = run_config(&a.common)?;
    let meas = io::load_measurements(&a.input)?;
    let mut ecfg = estimator_for(&cfg, &meas, a.no_mag);
    ecfg.estimate_bias |= a.estimate_bias;
    let alpha = match (a.alpha, cfg.algorithm) {
        (Some(x), _) => x,
        (None, Algorithm::Complementary { alpha }) => alpha,
        (None, _) => 0.07,
    };
    let alg = match a.alg {
        Some(Alg::Smooth) => Algorithm::Smoothing,
        Some(Alg::FiltOpt) => Algorithm::FilterOpt,
        Some(Alg::EkfQuat) => Algorithm::EkfQuat,
        Some(Alg::EkfDev) => Algorithm::EkfDev,
        Some(Alg::Compl) => Algorithm::Complementary { alpha },
        None => match cfg.algorithm {
            Algorithm::Complementary { .. } => Algorithm::Complementary { alpha },
            other => other,
        },
    };
    let trace = match a.mode {
        Mode::Orientation => alg.estimate_orientation(&meas, &ecfg)?,
        Mode::Pose => alg.estimate_pose(&meas, &ecfg)?,
    };
    io::save_trace(&a.out, &trace, meas.t0, meas.sample_period)
}

fn errors_of(est: &Path, truth: &Path) -> Result<(ErrorTrace, f64, f64)> {
    let est = io::load_trace(est)?;
    let truth = io::load_trace(truth)?;
    Ok((reference_error(&est.trace, &truth.trace)?, est.t0, est.sample_period))
}

fn error_cmd(a: ErrorArgs) -> Result<()> {
    let (err, t0, period) = errors_of(&a.input, &a.truth)?;
    let summary = RmseSummary::of(&err)?;
    println!("{}", serde_json::to_string_pretty(&json!({ "schema_version": SCHEMA_VERSION, "rmse": summary }))?);
    if let Some(out) = &a.out {
        std::fs::write(out, io::plot_errors(&err, t0, period))?;
    }
    Ok(())
}

fn montecarlo_cmd(a: MonteCarloArgs) -> Result<()> {
    let id = StudyId::parse(&a.table)?;
    let doc = monte_carlo(id, a.runs.unwrap_or_else(|| id.default_runs()), a.seed)?;
    print!("{}", doc.text);
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<()> {
    let cfg = run_config(&a.common)?;
    let meas = io::load_measurements(&a.input)?;
    let ecfg = estimator_for(&cfg, &meas, a.no_mag);
    let est: BiasEstimate = match a.method {
        Method::Ml => ml_bias_estimate(&meas, &ecfg, &cfg.ml)?,
        Method::MapSmooth => map_bias_smoothing(&meas, &ecfg)?.1,
        Method::MapFiltOpt => map_bias_filtering(&meas, &ecfg, BiasFilter::FilterOpt)?.1,
        Method::MapEkfQuat => map_bias_filtering(&meas, &ecfg, BiasFilter::EkfQuat)?.1,
        Method::MapEkfDev => map_bias_filtering(&meas, &ecfg, BiasFilter::EkfDev)?.1,
    };
    let std = est.covariance.map(|c| [c[(0, 0)].max(0.0).sqrt(), c[(1, 1)].max(0.0).sqrt(), c[(2, 2)].max(0.0).sqrt()]);
    let prior = (!matches!(a.method, Method::Ml)).then_some(ecfg.noise.sigma_bias_prior);
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "method": est.method.name(),
        "mean": [est.bias.x, est.bias.y, est.bias.z],
        "std": std,
        "runs": 1,
        "prior_sigma": prior,
        "iterations": est.iterations,
        "converged": est.converged,
    });
    write_or_print(a.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn allan_cmd(a: AllanArgs) -> Result<()> {
    let meas = io::load_measurements(&a.input)?;
    let series = match a.sensor {
        Sensor::Gyr => &meas.gyr,
        Sensor::Acc => &meas.acc,
    };
    let dt = meas.sample_period;
    let record = dt * series.len() as f64;
    let tmin = a.tmin.unwrap_or(dt);
    let tmax = a.tmax.unwrap_or(record / 10.0);
    if !(tmin > 0.0 && tmax > tmin) {
        return Err(Error::InvalidConfig(format!("cluster time range [{tmin}, {tmax}] is empty")));
    }
    let r = allan_deviation(series, dt, &log_spaced_clusters(dt, tmin, tmax, a.points))?;
    eprintln!("slope {:.4} {:.4} {:.4}", r.slope.x, r.slope.y, r.slope.z);
    write_or_print(a.out.as_deref(), &io::plot_allan(&r))
}

fn plot_cmd(a: PlotArgs) -> Result<()> {
    let text = match a.kind {
        Kind::Errors => {
            let truth = a.truth.as_ref().ok_or_else(|| Error::InvalidConfig("the errors kind needs --truth".into()))?;
            let (err, t0, dt) = errors_of(&a.input, truth)?;
            io::plot_errors(&err, t0, dt)
        }
        Kind::Sigma => {
            let tr = io::load_trace(&a.input)?;
            io::plot_sigma(&tr.trace, tr.t0, tr.sample_period)?
        }
        Kind::BiasConvergence => {
            let tr = io::load_trace(&a.input)?;
            io::plot_bias_convergence(&tr.trace, tr.t0, tr.sample_period)?
        }
        Kind::Allan => {
            let meas = io::load_measurements(&a.input)?;
            let dt = meas.sample_period;
            let clusters = log_spaced_clusters(dt, dt, dt * meas.len() as f64 / 10.0, 20);
            io::plot_allan(&allan_deviation(&meas.gyr, dt, &clusters)?)
        }
    };
    write_or_print(a.out.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Error(a) => error_cmd(a),
        Command::Montecarlo(a) => montecarlo_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Allan(a) => allan_cmd(a),
        Command::Plotdata(a) => plot_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.class(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
