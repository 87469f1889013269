use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nfloc::dma::Regime;
use nfloc::experiment::persist::{self, ensure_dir, Manifest};
use nfloc::experiment::{
    estimate_trial, run_heatmap, run_rmse_vs_snr, Architecture, HeatmapScenario, RunOptions,
    ScenarioConfig,
};
use nfloc::geometry::PolarPosition;
use nfloc::{plot, selfcheck, Error};

#[derive(Parser, Debug)]
#[command(
    name = "nfloc",
    version,
    about = "Near-field localization with dynamic metasurface antennas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Localization RMSE against SNR for every receiver scheme.
    RmseVsSnr(RmseArgs),
    /// RMSE maps over the initial focusing position.
    Heatmap(HeatmapArgs),
    /// One estimate, printed to stdout.
    EstimateOnce(EstimateArgs),
    /// Write DMA weights focused on a position.
    TuneWeights(TuneArgs),
    /// Run the built-in oracle checks.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML scenario file. Missing keys take built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args, Debug)]
struct PlotToggle {
    /// Render SVG figures from the CSV output (default).
    #[arg(long, overrides_with = "no_plots")]
    plots: bool,
    #[arg(long = "no-plots", overrides_with = "plots")]
    no_plots: bool,
}

impl PlotToggle {
    fn enabled(&self) -> bool {
        !self.no_plots
    }
}

#[derive(Args, Debug)]
struct RmseArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Trials per SNR point.
    #[arg(long)]
    trials: Option<usize>,
    /// SNR in dB; repeat for several points.
    #[arg(long, allow_negative_numbers = true)]
    snr: Vec<f64>,
    #[command(flatten)]
    plots: PlotToggle,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// SNR in dB.
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    /// Grid points per axis (91 gives 0.1 m cells over 9 m).
    #[arg(long)]
    grid: Option<usize>,
    /// near_field, far_field or both.
    #[arg(long, default_value = "both")]
    scenario: String,
    #[command(flatten)]
    plots: PlotToggle,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true, default_value_t = -5.0)]
    snr: f64,
    /// fully_digital, dma_half or dma_quarter.
    #[arg(long, default_value = "dma_half")]
    architecture: String,
    /// Trial index within the SNR point; matches the rows of rmse-vs-snr.
    #[arg(long, default_value_t = 0)]
    trial: usize,
    /// Also write the per-iteration trace here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Focus distance in meters (default: the configured source).
    #[arg(long)]
    distance: Option<f64>,
    /// Focus angle in radians (default: the configured source).
    #[arg(long, allow_negative_numbers = true)]
    angle: Option<f64>,
    #[arg(long, default_value = "dma_half")]
    architecture: String,
    /// lorentzian or phase_only.
    #[arg(long, default_value = "lorentzian")]
    regime: String,
}

#[derive(Args, Debug)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load_config(common: &Common) -> CliResult<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            ScenarioConfig::from_path(path).map_err(|e| Failure::Config(e.to_string()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn options(common: &Common) -> CliResult<(RunOptions, usize)> {
    let workers = match common.parallel {
        Some(0) => return Err(Failure::Config("--parallel must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    Ok((RunOptions::with_workers(workers), workers))
}

fn relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}

fn rmse_vs_snr(args: RmseArgs) -> CliResult<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if !args.snr.is_empty() {
        cfg.snr_db = args.snr.clone();
    }
    cfg.validate()?;
    let (opts, workers) = options(&args.common)?;
    ensure_dir(&args.out)?;

    let result = run_rmse_vs_snr(&cfg, opts)?;
    let paths = persist::write_rmse(&result, &args.out)?;
    let mut manifest = Manifest::new("rmse-vs-snr", &cfg, workers);
    manifest.flags.insert("seed".into(), json!(cfg.seed));
    manifest.flags.insert("trials".into(), json!(cfg.trials));
    manifest.flags.insert("snr".into(), json!(cfg.snr_db));
    manifest.flags.insert("parallel".into(), json!(workers));
    manifest
        .flags
        .insert("plots".into(), json!(args.plots.enabled()));
    manifest
        .timings_s
        .insert("rmse_vs_snr".into(), result.wall_time_s);
    manifest.outputs.push(relative(&args.out, &paths.trials));
    manifest.outputs.push(relative(&args.out, &paths.aggregate));
    if args.plots.enabled() && !cfg.snr_db.iter().any(|s| s.is_finite()) {
        eprintln!("no finite SNR points, skipping the plot");
    } else if args.plots.enabled() {
        let svg = args.out.join("rmse_vs_snr.svg");
        plot::rmse_vs_snr(&paths.aggregate, &svg)?;
        manifest.outputs.push(relative(&args.out, &svg));
    }
    manifest.write(&args.out)?;

    println!(
        "{:<20} {:>8} {:>10} {:>7}",
        "scheme", "snr_db", "rmse_m", "trials"
    );
    for a in &result.aggregates {
        println!(
            "{:<20} {:>8} {:>10.4} {:>7}",
            a.scheme.as_str(),
            a.snr_db,
            a.rmse_m,
            a.trials
        );
    }
    if !result.failures.is_empty() {
        eprintln!("{} failed trials excluded", result.failures.len());
    }
    Ok(())
}

fn heatmap(args: HeatmapArgs) -> CliResult<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(t) = args.trials {
        cfg.heatmap.trials = t;
    }
    if let Some(s) = args.snr {
        cfg.heatmap.snr_db = s;
    }
    if let Some(g) = args.grid {
        cfg.heatmap.points = g;
    }
    cfg.validate()?;
    let scenarios = match args.scenario.as_str() {
        "both" => vec![HeatmapScenario::NearField, HeatmapScenario::FarField],
        other => vec![other.parse::<HeatmapScenario>()?],
    };
    let (opts, workers) = options(&args.common)?;
    ensure_dir(&args.out)?;

    let mut manifest = Manifest::new("heatmap", &cfg, workers);
    manifest.flags.insert("seed".into(), json!(cfg.seed));
    manifest
        .flags
        .insert("trials".into(), json!(cfg.heatmap.trials));
    manifest
        .flags
        .insert("snr".into(), json!(cfg.heatmap.snr_db));
    manifest
        .flags
        .insert("grid".into(), json!(cfg.heatmap.points));
    manifest.flags.insert("parallel".into(), json!(workers));
    manifest
        .flags
        .insert("plots".into(), json!(args.plots.enabled()));
    manifest
        .flags
        .insert("scenario".into(), json!(args.scenario));
    for sc in scenarios {
        let result = run_heatmap(&cfg, sc, opts)?;
        let csv = persist::write_heatmap(&result, &args.out)?;
        manifest
            .timings_s
            .insert(sc.as_str().into(), result.wall_time_s);
        manifest.outputs.push(relative(&args.out, &csv));
        if args.plots.enabled() {
            let svg = args.out.join(format!("heatmap_{}.svg", sc.as_str()));
            plot::heatmap(&csv, &svg)?;
            manifest.outputs.push(relative(&args.out, &svg));
        }
        if let Some((cell, v)) = result.minimum() {
            println!(
                "{}: minimum RMSE {v:.4} m at ({}, {}), true source at {}",
                sc.as_str(),
                cell.x_m,
                cell.y_m,
                result.truth
            );
        }
    }
    manifest.write(&args.out)?;
    Ok(())
}

fn estimate_once(args: EstimateArgs) -> CliResult<()> {
    let cfg = load_config(&args.common)?;
    let arch: Architecture = args.architecture.parse()?;
    let (opts, _) = options(&args.common)?;
    let start = Instant::now();
    let one = estimate_trial(&cfg, arch, args.snr, args.trial, opts)?;
    if let Some(trace) = &one.trace {
        for r in &trace.records {
            println!(
                "k={} d_hat_m={:.6} theta_hat_rad={:.6} error_m={:.6}",
                r.k, r.estimate.d, r.estimate.theta, r.error_m
            );
        }
        if let Some(dir) = &args.out {
            ensure_dir(dir)?;
            trace.write_csv(dir.join("trace.csv"))?;
        }
    }
    println!(
        "architecture={} snr_db={} seed={} trial={} d_hat_m={:.6} theta_hat_rad={:.6} error_m={:.6}",
        arch, args.snr, cfg.seed, args.trial, one.estimate.d, one.estimate.theta, one.error_m
    );
    eprintln!("elapsed {:.2} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn tune_weights(args: TuneArgs) -> CliResult<()> {
    let cfg = load_config(&args.common)?;
    let arch: Architecture = args.architecture.parse()?;
    if arch == Architecture::FullyDigital {
        return Err(Failure::Config(
            "tune-weights needs a DMA architecture".into(),
        ));
    }
    let regime: Regime = args.regime.parse()?;
    let focus = PolarPosition::new(
        args.distance.unwrap_or(cfg.truth.d_m),
        args.angle.unwrap_or(cfg.truth.theta_rad),
    )?;
    let layout = cfg.layout(arch)?;
    let wg = cfg.waveguide_model(layout.n_strips())?;
    let w = nfloc::dma::tune_weights(&layout, &wg, focus, cfg.carrier_hz)?.with_regime(regime);
    ensure_dir(&args.out)?;
    let path = args.out.join(format!("weights_{}.csv", arch.as_str()));
    w.write_csv(&path)?;
    println!(
        "focus {} architecture={} regime={} elements={} checksum={:016x} -> {}",
        focus,
        arch,
        regime.as_str(),
        w.len(),
        w.checksum(),
        path.display()
    );
    Ok(())
}

fn run_selfcheck(args: SelfcheckArgs) -> CliResult<()> {
    let checks = selfcheck::run_all(args.seed);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} of {} checks failed",
            checks.len()
        )));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", e.render());
                    ExitCode::from(1)
                }
            };
        }
    };
    let outcome = match cli.command {
        Command::RmseVsSnr(a) => rmse_vs_snr(a),
        Command::Heatmap(a) => heatmap(a),
        Command::EstimateOnce(a) => estimate_once(a),
        Command::TuneWeights(a) => tune_weights(a),
        Command::Selfcheck(a) => run_selfcheck(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
