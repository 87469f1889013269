//! Monte Carlo studies: localization error against SNR for each receiver
//! architecture, and error maps over the initial focusing position.

pub mod config;
pub mod heatmap;
pub mod persist;
pub mod rmse;
pub mod stats;

pub use config::{Architecture, ScenarioConfig};
pub use heatmap::{run_heatmap, run_heatmap_at, HeatmapCell, HeatmapResult, HeatmapScenario};
pub use persist::{Manifest, RunPaths};
pub use rmse::{
    estimate_trial, run_rmse_vs_snr, AggregateRow, ExperimentResult, Scheme, TrialEstimate,
    TrialRow,
};

use crate::error::{Error, Result};

/// Execution settings that do not affect results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker thread cap. `None` uses every available core.
    pub workers: Option<usize>,
}

impl RunOptions {
    pub fn with_workers(workers: usize) -> Self {
        RunOptions {
            workers: Some(workers),
        }
    }

    /// Runs `f` inside a pool sized by `workers`.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            if n == 0 {
                return Err(Error::Config("parallelism must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Excludes failed trials when they are rare, otherwise fails the run.
pub(crate) fn check_failures(what: &str, failures: usize, trials: usize) -> Result<()> {
    if failures == 0 || failures * 100 < trials {
        Ok(())
    } else {
        Err(Error::EstimationFailure(format!(
            "{what}: {failures} of {trials} trials failed"
        )))
    }
}
