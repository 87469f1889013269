//! Localization error against SNR for the fully-digital array and the two
//! DMAs, with random and with iteratively tuned weights.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Architecture, ScenarioConfig};
use super::stats::rmse;
use super::{check_failures, RunOptions};
use crate::alternating::{
    run_alternating, AlternatingConfig, AlternatingTrace, InitialWeights, Scenario,
};
use crate::error::{Error, Result};
use crate::geometry::PolarPosition;
use crate::likelihood::{estimate_fd, SearchGrid, SteeringTable};
use crate::seed::{self, tag};
use crate::signal::{
    build_channel, noise_power_from_snr_db, sample_snapshots, ArrayModel, ChannelRealization,
    FrontEnd, SamplingSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FdMle,
    DmaRandomHalf,
    DmaRandomQuarter,
    DmaTunedHalf,
    DmaTunedQuarter,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::FdMle,
        Scheme::DmaRandomHalf,
        Scheme::DmaRandomQuarter,
        Scheme::DmaTunedHalf,
        Scheme::DmaTunedQuarter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::FdMle => "fd_mle",
            Scheme::DmaRandomHalf => "dma_random_half",
            Scheme::DmaRandomQuarter => "dma_random_quarter",
            Scheme::DmaTunedHalf => "dma_tuned_half",
            Scheme::DmaTunedQuarter => "dma_tuned_quarter",
        }
    }

    pub fn architecture(self) -> Architecture {
        match self {
            Scheme::FdMle => Architecture::FullyDigital,
            Scheme::DmaRandomHalf | Scheme::DmaTunedHalf => Architecture::DmaHalf,
            Scheme::DmaRandomQuarter | Scheme::DmaTunedQuarter => Architecture::DmaQuarter,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// One estimate. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub d_hat_m: f64,
    pub theta_hat_rad: f64,
    pub error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub rmse_m: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ScenarioConfig,
    /// Ordered by scheme, then SNR as configured, then trial.
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: Vec<FailureRecord>,
    pub wall_time_s: f64,
}

impl ExperimentResult {
    pub fn aggregate(&self, scheme: Scheme, snr_db: f64) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.scheme == scheme && a.snr_db == snr_db)
    }

    /// Errors of `scheme` at `snr_db`, one slot per trial (`None` if failed).
    pub fn errors(&self, scheme: Scheme, snr_db: f64) -> Vec<Option<f64>> {
        let mut out = vec![None; self.config.trials];
        for r in self
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && r.snr_db == snr_db)
        {
            out[r.trial] = Some(r.error_m);
        }
        out
    }
}

/// Seed shared by every scheme in one trial.
pub fn trial_seed(master: u64, snr_db: f64, trial: usize) -> u64 {
    seed::derive(master, &[tag::RMSE_TRIAL, snr_db.to_bits(), trial as u64])
}

/// Aggregates per scheme and SNR, in the order of `schemes` and `snrs`.
pub fn aggregate_rows(rows: &[TrialRow], schemes: &[Scheme], snrs: &[f64]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &scheme in schemes {
        for &snr_db in snrs {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.scheme == scheme && r.snr_db == snr_db)
                .map(|r| r.error_m)
                .collect();
            out.push(AggregateRow {
                scheme,
                snr_db,
                rmse_m: rmse(&errs),
                trials: errs.len(),
            });
        }
    }
    out
}

struct Context {
    grid: SearchGrid,
    fd_model: ArrayModel,
    fd_channel: ChannelRealization,
    fd_table: SteeringTable,
    half: Scenario,
    quarter: Scenario,
}

impl Context {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let truth = cfg.truth();
        let fd_layout = cfg.layout(Architecture::FullyDigital)?;
        let fd_model = ArrayModel::new(fd_layout.clone(), cfg.carrier_hz, cfg.gain)?;
        let fd_table = SteeringTable::new(&fd_model, &grid);
        let dma = |arch| -> Result<Scenario> {
            let layout = cfg.layout(arch)?;
            let wg = cfg.waveguide_model(layout.n_strips())?;
            Ok(Scenario::new(layout, cfg.carrier_hz, cfg.gain, wg, truth)?.with_table(&grid))
        };
        Ok(Context {
            fd_channel: build_channel(&fd_layout, truth, cfg.carrier_hz, cfg.gain)?,
            fd_model,
            fd_table,
            half: dma(Architecture::DmaHalf)?,
            quarter: dma(Architecture::DmaQuarter)?,
            grid,
        })
    }
}

type Outcome = (Scheme, Result<PolarPosition>);

fn run_trial(ctx: &Context, cfg: &ScenarioConfig, snr_db: f64, seed: u64) -> Vec<Outcome> {
    let noise = noise_power_from_snr_db(snr_db);
    let mut out = Vec::with_capacity(5);

    // same element noise as the first DMA round
    let sampling = SamplingSpec::new(
        cfg.snapshots,
        noise,
        seed::derive(seed, &[tag::SNAPSHOTS, 0]),
    );
    let fd = sample_snapshots(&ctx.fd_channel, FrontEnd::FullyDigital, sampling)
        .and_then(|batch| estimate_fd(&ctx.fd_model, &batch, &ctx.grid, Some(&ctx.fd_table)))
        .map(|o| o.estimate);
    out.push((Scheme::FdMle, fd));

    let mut alt = AlternatingConfig::new(
        ctx.grid.clone(),
        noise,
        InitialWeights::Random {
            seed: seed::derive(seed, &[tag::WEIGHTS]),
        },
    );
    alt.iterations = cfg.iterations;
    alt.snapshots = cfg.snapshots;
    alt.resample_per_iteration = cfg.resample_per_iteration;

    for (scenario, random, tuned) in [
        (&ctx.half, Scheme::DmaRandomHalf, Scheme::DmaTunedHalf),
        (
            &ctx.quarter,
            Scheme::DmaRandomQuarter,
            Scheme::DmaTunedQuarter,
        ),
    ] {
        // round 0 of the alternating run is exactly the random-weights estimate
        match run_alternating(scenario, &alt, seed) {
            Ok(trace) => {
                out.push((random, Ok(trace.records[0].estimate)));
                out.push((tuned, Ok(trace.records[cfg.iterations].estimate)));
            }
            Err(e) => {
                let first = match e.trace.initial() {
                    Some(r) => Ok(r.estimate),
                    None => Err(Error::EstimationFailure(e.to_string())),
                };
                out.push((random, first));
                out.push((tuned, Err(e.source)));
            }
        }
    }
    out
}

/// One trial for one architecture, identical to the matching rows of
/// [`run_rmse_vs_snr`]. DMA architectures report the tuned estimate and keep
/// the full trace.
#[derive(Debug, Clone)]
pub struct TrialEstimate {
    pub architecture: Architecture,
    pub snr_db: f64,
    pub seed: u64,
    pub truth: PolarPosition,
    pub estimate: PolarPosition,
    pub error_m: f64,
    pub trace: Option<AlternatingTrace>,
}

pub fn estimate_trial(
    cfg: &ScenarioConfig,
    arch: Architecture,
    snr_db: f64,
    trial: usize,
    opts: RunOptions,
) -> Result<TrialEstimate> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let truth = cfg.truth();
    let seed = trial_seed(cfg.seed, snr_db, trial);
    let noise = noise_power_from_snr_db(snr_db);
    let layout = cfg.layout(arch)?;
    let (estimate, trace) = opts.install(|| -> Result<_> {
        if arch == Architecture::FullyDigital {
            let model = ArrayModel::new(layout.clone(), cfg.carrier_hz, cfg.gain)?;
            let channel = build_channel(&layout, truth, cfg.carrier_hz, cfg.gain)?;
            let sampling = SamplingSpec::new(
                cfg.snapshots,
                noise,
                seed::derive(seed, &[tag::SNAPSHOTS, 0]),
            );
            let batch = sample_snapshots(&channel, FrontEnd::FullyDigital, sampling)?;
            let table = SteeringTable::new(&model, &grid);
            return Ok((
                estimate_fd(&model, &batch, &grid, Some(&table))?.estimate,
                None,
            ));
        }
        let wg = cfg.waveguide_model(layout.n_strips())?;
        let scenario =
            Scenario::new(layout, cfg.carrier_hz, cfg.gain, wg, truth)?.with_table(&grid);
        let mut alt = AlternatingConfig::new(
            grid.clone(),
            noise,
            InitialWeights::Random {
                seed: seed::derive(seed, &[tag::WEIGHTS]),
            },
        );
        alt.iterations = cfg.iterations;
        alt.snapshots = cfg.snapshots;
        alt.resample_per_iteration = cfg.resample_per_iteration;
        let trace = run_alternating(&scenario, &alt, seed)?;
        let last = trace.records[cfg.iterations].estimate;
        Ok((last, Some(trace)))
    })??;
    Ok(TrialEstimate {
        architecture: arch,
        snr_db,
        seed,
        truth,
        estimate,
        error_m: estimate.distance_to(truth),
        trace,
    })
}

/// Runs every scheme for `cfg.trials` paired trials at each SNR.
pub fn run_rmse_vs_snr(cfg: &ScenarioConfig, opts: RunOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let truth = cfg.truth();
    let ctx = opts.install(|| Context::new(cfg))??;

    let jobs: Vec<(f64, usize)> = cfg
        .snr_db
        .iter()
        .flat_map(|&s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let outcomes: Vec<Vec<Outcome>> = opts.install(|| {
        jobs.par_iter()
            .map(|&(snr, t)| run_trial(&ctx, cfg, snr, trial_seed(cfg.seed, snr, t)))
            .collect()
    })?;

    let mut rows = Vec::with_capacity(jobs.len() * Scheme::ALL.len());
    let mut failures = Vec::new();
    for scheme in Scheme::ALL {
        for (&(snr_db, trial), outcome) in jobs.iter().zip(&outcomes) {
            let (_, res) = outcome
                .iter()
                .find(|(s, _)| *s == scheme)
                .expect("every scheme runs");
            match res {
                Ok(est) => rows.push(TrialRow {
                    scheme,
                    snr_db,
                    trial,
                    seed: trial_seed(cfg.seed, snr_db, trial),
                    d_hat_m: est.d,
                    theta_hat_rad: est.theta,
                    error_m: est.distance_to(truth),
                }),
                Err(e) => failures.push(FailureRecord {
                    scheme,
                    snr_db,
                    trial,
                    message: e.to_string(),
                }),
            }
        }
    }
    for scheme in Scheme::ALL {
        for &snr in &cfg.snr_db {
            let n = failures
                .iter()
                .filter(|f| f.scheme == scheme && f.snr_db == snr)
                .count();
            check_failures(&format!("{scheme} at {snr} dB"), n, cfg.trials)?;
        }
    }
    let aggregates = aggregate_rows(&rows, &Scheme::ALL, &cfg.snr_db);
    Ok(ExperimentResult {
        config: cfg.clone(),
        rows,
        aggregates,
        failures,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.trials = 2;
        cfg.snr_db = vec![0.0, 20.0];
        cfg.snapshots = 4;
        cfg.iterations = 1;
        for a in [&mut cfg.fully_digital, &mut cfg.dma_half] {
            a.n_strips = 2;
            a.per_strip = 8;
        }
        cfg.dma_quarter.n_strips = 2;
        cfg.dma_quarter.per_strip = 16;
        cfg.truth.d_m = 1.0;
        cfg.search.d_min_m = 0.3;
        cfg.search.d_max_m = 3.0;
        cfg.search.n_d = 8;
        cfg.search.n_theta = 9;
        cfg.search.stages = 1;
        cfg
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("fd".parse::<Scheme>().is_err());
    }

    #[test]
    fn rows_are_complete_and_ordered() {
        let cfg = tiny();
        let res = run_rmse_vs_snr(&cfg, RunOptions::with_workers(1)).unwrap();
        assert_eq!(res.rows.len(), 5 * 2 * 2);
        assert_eq!(res.aggregates.len(), 10);
        assert_eq!(res.rows[0].scheme, Scheme::FdMle);
        assert_eq!(res.rows[19].scheme, Scheme::DmaTunedQuarter);
        for a in &res.aggregates {
            let errs: Vec<f64> = res
                .errors(a.scheme, a.snr_db)
                .into_iter()
                .flatten()
                .collect();
            assert!((a.rmse_m - rmse(&errs)).abs() < 1e-12);
        }
        // paired design: one seed per (snr, trial) for every scheme
        for r in &res.rows {
            assert_eq!(r.seed, trial_seed(cfg.seed, r.snr_db, r.trial));
        }
    }

    #[test]
    fn single_trial_matches_sweep_rows() {
        let cfg = tiny();
        let res = run_rmse_vs_snr(&cfg, RunOptions::with_workers(1)).unwrap();
        for (arch, scheme) in [
            (Architecture::FullyDigital, Scheme::FdMle),
            (Architecture::DmaQuarter, Scheme::DmaTunedQuarter),
        ] {
            let one = estimate_trial(&cfg, arch, 20.0, 1, RunOptions::with_workers(1)).unwrap();
            let row = res
                .rows
                .iter()
                .find(|r| r.scheme == scheme && r.snr_db == 20.0 && r.trial == 1)
                .unwrap();
            assert_eq!(one.estimate.d, row.d_hat_m);
            assert_eq!(one.estimate.theta, row.theta_hat_rad);
            assert_eq!(one.seed, row.seed);
            assert_eq!(one.trace.is_some(), arch != Architecture::FullyDigital);
        }
    }
}
