//! Alternating localization and DMA retuning.
//!
//! Starting from some initial weights `Q0`, each round estimates the source
//! under the current weights, focuses the weights on that estimate, and
//! takes fresh observations through them.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dma::{
    apply_weights, project_lorentzian, random_weights, tune_weights, DmaWeights, Regime,
};
use crate::error::{Error, Result};
use crate::geometry::{ArrayLayout, PolarPosition};
use crate::likelihood::{estimate_dma, SearchGrid, SteeringTable};
use crate::seed::{self, tag};
use crate::signal::{
    build_channel, build_waveguide_matrix, sample_snapshots, ArrayModel, ChannelRealization,
    FrontEnd, GainModel, SamplingSpec, WaveguideMatrix, WaveguideModel,
};

/// A DMA observing one source.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ArrayModel,
    pub waveguide_model: WaveguideModel,
    pub waveguide: WaveguideMatrix,
    pub channel: ChannelRealization,
    table: Option<SteeringTable>,
}

impl Scenario {
    pub fn new(
        layout: ArrayLayout,
        carrier_hz: f64,
        gain: GainModel,
        waveguide_model: WaveguideModel,
        truth: PolarPosition,
    ) -> Result<Self> {
        let waveguide = build_waveguide_matrix(&layout, &waveguide_model)?;
        let channel = build_channel(&layout, truth, carrier_hz, gain)?;
        Ok(Scenario {
            model: ArrayModel::new(layout, carrier_hz, gain)?,
            waveguide_model,
            waveguide,
            channel,
            table: None,
        })
    }

    /// Precompute first-stage signatures for `grid`.
    pub fn with_table(mut self, grid: &SearchGrid) -> Self {
        self.table = Some(SteeringTable::new(&self.model, grid));
        self
    }

    /// Same array and cached table, different source.
    pub fn with_truth(&self, truth: PolarPosition) -> Result<Self> {
        let mut out = self.clone();
        out.channel = build_channel(
            &self.model.layout,
            truth,
            self.model.carrier_hz,
            self.model.gain,
        )?;
        Ok(out)
    }

    pub fn truth(&self) -> PolarPosition {
        self.channel.source
    }

    pub fn layout(&self) -> &ArrayLayout {
        &self.model.layout
    }

    /// Lorentzian weights focused on `focus`.
    pub fn focused_weights(&self, focus: PolarPosition) -> Result<DmaWeights> {
        Ok(project_lorentzian(&tune_weights(
            &self.model.layout,
            &self.waveguide_model,
            focus,
            self.model.carrier_hz,
        )?))
    }

    /// `tr[P R]` at the true position with the ensemble covariance
    /// `R = Q H (g g^H + noise I) H^H Q^H`.
    pub fn ensemble_focus(&self, w: &DmaWeights, noise_power: f64) -> Result<f64> {
        let u = apply_weights(w, &self.waveguide, &self.channel.g)?;
        let norm: f64 = u.iter().map(|c| c.norm_sqr()).sum();
        if norm == 0.0 {
            return Ok(0.0);
        }
        // u^H (Q H H^H Q^H) u = sum_n |h_n q_n|^2 |u_strip(n)|^2
        let eff = w.effective(&self.waveguide)?;
        let per = w.per_strip();
        let colored: f64 = eff
            .iter()
            .enumerate()
            .map(|(n, e)| e.norm_sqr() * u[n / per].norm_sqr())
            .sum();
        Ok(norm + noise_power * colored / norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialWeights {
    /// I.i.d. Lorentzian phases from this seed.
    Random {
        seed: u64,
    },
    Explicit(DmaWeights),
    /// Weights tuned to an assumed source position.
    FocusAt(PolarPosition),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingConfig {
    /// Number of retuning rounds `K`.
    pub iterations: usize,
    pub initial_weights: InitialWeights,
    pub grid: SearchGrid,
    /// Draw fresh noise each round. When false every round reuses the noise
    /// realization of round 0.
    pub resample_per_iteration: bool,
    pub snapshots: usize,
    pub noise_power: f64,
}

impl AlternatingConfig {
    pub fn new(grid: SearchGrid, noise_power: f64, initial_weights: InitialWeights) -> Self {
        AlternatingConfig {
            iterations: 5,
            initial_weights,
            grid,
            resample_per_iteration: true,
            snapshots: 64,
            noise_power,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iteration count must be at least 1".into()));
        }
        if self.snapshots == 0 {
            return Err(Error::Config("snapshot count must be at least 1".into()));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::Config(format!(
                "noise power must be non-negative, got {}",
                self.noise_power
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub estimate: PolarPosition,
    /// Likelihood value at the estimate.
    pub objective: f64,
    /// Checksum of the weights the observations were taken with.
    pub weights_checksum: u64,
    /// Ensemble focusing objective of those weights at the true position.
    pub truth_focus: f64,
    /// Cartesian distance from the estimate to the true position.
    pub error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternatingTrace {
    pub records: Vec<IterationRecord>,
    pub truth: PolarPosition,
}

impl AlternatingTrace {
    pub fn initial(&self) -> Option<&IterationRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn final_estimate(&self) -> Option<PolarPosition> {
        self.last().map(|r| r.estimate)
    }

    /// CSV with columns `k,d_k,theta_k,objective,error_m`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        wtr.write_record(["k", "d_k", "theta_k", "objective", "error_m"])
            .map_err(|e| Error::csv(path, e))?;
        for r in &self.records {
            wtr.write_record([
                r.k.to_string(),
                r.estimate.d.to_string(),
                r.estimate.theta.to_string(),
                r.objective.to_string(),
                r.error_m.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

/// A failed round, with everything recorded before it.
#[derive(Debug, thiserror::Error)]
#[error("alternating estimation stopped at iteration {iteration}: {source}")]
pub struct AlternatingError {
    pub iteration: usize,
    pub trace: AlternatingTrace,
    #[source]
    pub source: Error,
}

impl From<AlternatingError> for Error {
    fn from(e: AlternatingError) -> Self {
        e.source
    }
}

fn initial_weights(scenario: &Scenario, init: &InitialWeights) -> Result<DmaWeights> {
    let layout = scenario.layout();
    match init {
        InitialWeights::Random { seed } => Ok(random_weights(layout, Regime::Lorentzian, *seed)),
        InitialWeights::Explicit(w) => {
            if w.n_strips() != layout.n_strips() || w.per_strip() != layout.per_strip() {
                return Err(Error::Dimension {
                    expected: layout.len(),
                    found: w.len(),
                });
            }
            Ok(w.clone())
        }
        InitialWeights::FocusAt(p) => scenario.focused_weights(*p),
    }
}

/// Runs `K` rounds of estimate-then-retune. The trace holds `K + 1` records:
/// the estimate under the initial weights and one per retuned configuration.
/// Round `k` draws its noise from `derive(seed, [SNAPSHOTS, k])`.
pub fn run_alternating(
    scenario: &Scenario,
    cfg: &AlternatingConfig,
    seed: u64,
) -> std::result::Result<AlternatingTrace, AlternatingError> {
    let truth = scenario.truth();
    let mut trace = AlternatingTrace {
        records: Vec::with_capacity(cfg.iterations + 1),
        truth,
    };
    let fail = |iteration, trace: AlternatingTrace, source| AlternatingError {
        iteration,
        trace,
        source,
    };

    if let Err(e) = cfg.validate() {
        return Err(fail(0, trace, e));
    }
    let mut weights = match initial_weights(scenario, &cfg.initial_weights) {
        Ok(w) => w,
        Err(e) => return Err(fail(0, trace, e)),
    };
    let table = scenario.table.as_ref();

    for k in 0..=cfg.iterations {
        let round = if cfg.resample_per_iteration {
            k as u64
        } else {
            0
        };
        let sampling = SamplingSpec {
            snapshots: cfg.snapshots,
            noise_power: cfg.noise_power,
            pilot: Complex64::new(1.0, 0.0),
            seed: seed::derive(seed, &[tag::SNAPSHOTS, round]),
        };
        let step = || -> Result<IterationRecord> {
            let front_end = FrontEnd::Dma {
                weights: &weights,
                waveguide: &scenario.waveguide,
            };
            let batch = sample_snapshots(&scenario.channel, front_end, sampling)?;
            let out = estimate_dma(
                &scenario.model,
                &batch,
                &scenario.waveguide,
                &weights,
                &cfg.grid,
                table,
            )?;
            Ok(IterationRecord {
                k,
                estimate: out.estimate,
                objective: out.value,
                weights_checksum: weights.checksum(),
                truth_focus: scenario.ensemble_focus(&weights, cfg.noise_power)?,
                error_m: out.estimate.distance_to(truth),
            })
        };
        let record = match step() {
            Ok(r) => r,
            Err(e) => return Err(fail(k, trace, e)),
        };
        let estimate = record.estimate;
        trace.records.push(record);
        if k < cfg.iterations {
            weights = match scenario.focused_weights(estimate) {
                Ok(w) => w,
                Err(e) => return Err(fail(k, trace, e)),
            };
        }
    }
    Ok(trace)
}
