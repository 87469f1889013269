//! Error maps over the initial focusing position.
//!
//! Each cell of an `x`-`y` grid is used as the assumed source position that
//! the first DMA configuration focuses on; the alternating estimator then
//! runs from there. Every cell uses the same trial seeds, so differences
//! between cells come from the initial focus rather than the noise.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Architecture, ScenarioConfig};
use super::stats::rmse;
use super::{check_failures, RunOptions};
use crate::alternating::{run_alternating, AlternatingConfig, InitialWeights, Scenario};
use crate::error::{Error, Result};
use crate::geometry::PolarPosition;
use crate::seed::{self, tag};
use crate::signal::noise_power_from_snr_db;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapScenario {
    /// The full-size DMA with the source inside its Fraunhofer distance.
    NearField,
    /// The short-strip DMA with the source beyond its Fraunhofer distance.
    FarField,
}

impl HeatmapScenario {
    pub fn as_str(self) -> &'static str {
        match self {
            HeatmapScenario::NearField => "near_field",
            HeatmapScenario::FarField => "far_field",
        }
    }

    fn code(self) -> u64 {
        match self {
            HeatmapScenario::NearField => 1,
            HeatmapScenario::FarField => 2,
        }
    }
}

impl fmt::Display for HeatmapScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeatmapScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "near_field" | "near" => Ok(HeatmapScenario::NearField),
            "far_field" | "far" => Ok(HeatmapScenario::FarField),
            other => Err(Error::Config(format!("unknown heatmap scenario `{other}`"))),
        }
    }
}

/// One cell. Field order is the CSV column order; `rmse_m` is empty for
/// skipped cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub scenario: HeatmapScenario,
    pub x_m: f64,
    pub y_m: f64,
    pub rmse_m: Option<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct HeatmapResult {
    pub scenario: HeatmapScenario,
    pub truth: PolarPosition,
    /// `x`-major when produced by [`run_heatmap`].
    pub cells: Vec<HeatmapCell>,
    pub failures: usize,
    pub wall_time_s: f64,
}

impl HeatmapResult {
    /// Evaluated cells only.
    pub fn evaluated(&self) -> impl Iterator<Item = (&HeatmapCell, f64)> {
        self.cells.iter().filter_map(|c| c.rmse_m.map(|r| (c, r)))
    }

    pub fn minimum(&self) -> Option<(&HeatmapCell, f64)> {
        self.evaluated().min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Cell centres of the configured grid, `x`-major.
pub fn grid_points(cfg: &ScenarioConfig) -> Vec<(f64, f64)> {
    let h = &cfg.heatmap;
    let n = h.points;
    let step_x = (h.x_max_m - h.x_min_m) / (n - 1) as f64;
    let step_y = (h.y_max_m - h.y_min_m) / (n - 1) as f64;
    (0..n)
        .flat_map(|i| {
            (0..n).map(move |j| (h.x_min_m + i as f64 * step_x, h.y_min_m + j as f64 * step_y))
        })
        .collect()
}

/// Trial seed shared by every cell of a map.
pub fn heatmap_seed(master: u64, scenario: HeatmapScenario, trial: usize) -> u64 {
    seed::derive(master, &[tag::HEATMAP_TRIAL, scenario.code(), trial as u64])
}

pub fn build_scenario(cfg: &ScenarioConfig, scenario: HeatmapScenario) -> Result<Scenario> {
    let grid = cfg.grid()?;
    let (layout, truth) = match scenario {
        HeatmapScenario::NearField => {
            if cfg.heatmap.architecture == Architecture::FullyDigital {
                return Err(Error::Config("heatmap architecture must be a DMA".into()));
            }
            (cfg.layout(cfg.heatmap.architecture)?, cfg.truth())
        }
        HeatmapScenario::FarField => (cfg.far_field.array.layout(cfg.carrier_hz)?, cfg.far_truth()),
    };
    let wg = cfg.waveguide_model(layout.n_strips())?;
    Ok(Scenario::new(layout, cfg.carrier_hz, cfg.gain, wg, truth)?.with_table(&grid))
}

/// The full configured grid. Cells with `x <= 0` are skipped.
pub fn run_heatmap(
    cfg: &ScenarioConfig,
    scenario: HeatmapScenario,
    opts: RunOptions,
) -> Result<HeatmapResult> {
    run_heatmap_at(cfg, scenario, &grid_points(cfg), opts)
}

/// Selected initial positions only, e.g. cells along one ray.
pub fn run_heatmap_at(
    cfg: &ScenarioConfig,
    scenario: HeatmapScenario,
    points: &[(f64, f64)],
    opts: RunOptions,
) -> Result<HeatmapResult> {
    cfg.validate()?;
    let start = Instant::now();
    let sc = opts.install(|| build_scenario(cfg, scenario))??;
    let truth = sc.truth();
    let trials = cfg.heatmap.trials;

    let mut alt = AlternatingConfig::new(
        cfg.grid()?,
        noise_power_from_snr_db(cfg.heatmap.snr_db),
        InitialWeights::Random { seed: 0 },
    );
    alt.iterations = cfg.iterations;
    alt.snapshots = cfg.snapshots;
    alt.resample_per_iteration = cfg.resample_per_iteration;

    let active: Vec<(usize, PolarPosition)> = points
        .iter()
        .enumerate()
        .filter(|(_, &(x, _))| x > 0.0)
        .map(|(i, &(x, y))| PolarPosition::from_cartesian(x, y).map(|p| (i, p)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..active.len())
        .flat_map(|c| (0..trials).map(move |t| (c, t)))
        .collect();
    let errors: Vec<Result<f64>> = opts.install(|| {
        jobs.par_iter()
            .map(|&(c, t)| {
                let mut local = alt.clone();
                local.initial_weights = InitialWeights::FocusAt(active[c].1);
                let trace = run_alternating(&sc, &local, heatmap_seed(cfg.seed, scenario, t))?;
                Ok(trace.records.last().expect("K + 1 records").error_m)
            })
            .collect()
    })?;

    let mut cells: Vec<HeatmapCell> = points
        .iter()
        .map(|&(x_m, y_m)| HeatmapCell {
            scenario,
            x_m,
            y_m,
            rmse_m: None,
            trials: 0,
        })
        .collect();
    let mut failures = 0;
    for (c, chunk) in errors.chunks(trials.max(1)).enumerate() {
        let ok: Vec<f64> = chunk
            .iter()
            .filter_map(|r| r.as_ref().ok().copied())
            .collect();
        let failed = chunk.len() - ok.len();
        let cell = &mut cells[active[c].0];
        check_failures(
            &format!("{scenario} cell ({}, {})", cell.x_m, cell.y_m),
            failed,
            trials,
        )?;
        failures += failed;
        cell.trials = ok.len();
        cell.rmse_m = Some(rmse(&ok));
    }
    Ok(HeatmapResult {
        scenario,
        truth,
        cells,
        failures,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
