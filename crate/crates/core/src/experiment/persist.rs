//! CSV and manifest output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::heatmap::{HeatmapCell, HeatmapResult};
use super::rmse::{AggregateRow, ExperimentResult, TrialRow};
use crate::error::{Error, Result};

pub const TRIALS_FILE: &str = "rmse_trials.csv";
pub const AGGREGATE_FILE: &str = "rmse_aggregate.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn heatmap_file(scenario: &str) -> String {
    format!("heatmap_{scenario}.csv")
}

/// Run metadata written next to the CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    /// Command-line values, after defaults were applied.
    pub flags: BTreeMap<String, serde_json::Value>,
    pub workers: usize,
    pub timings_s: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &ScenarioConfig, workers: usize) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            flags: BTreeMap::new(),
            workers,
            timings_s: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunPaths {
    pub trials: PathBuf,
    pub aggregate: PathBuf,
}

pub fn ensure_dir(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Writes the per-trial and aggregate CSV files into `dir`.
pub fn write_rmse(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<RunPaths> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    let paths = RunPaths {
        trials: dir.join(TRIALS_FILE),
        aggregate: dir.join(AGGREGATE_FILE),
    };
    write_rows(&paths.trials, &result.rows)?;
    write_rows(&paths.aggregate, &result.aggregates)?;
    Ok(paths)
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRow>> {
    read_rows(path)
}

pub fn read_aggregate(path: impl AsRef<Path>) -> Result<Vec<AggregateRow>> {
    read_rows(path)
}

pub fn write_heatmap(result: &HeatmapResult, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    let path = dir.join(heatmap_file(result.scenario.as_str()));
    write_rows(&path, &result.cells)?;
    Ok(path)
}

pub fn read_heatmap(path: impl AsRef<Path>) -> Result<Vec<HeatmapCell>> {
    read_rows(path)
}
