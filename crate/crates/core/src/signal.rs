//! Channel vectors, the microstrip propagation matrix, and noisy snapshots.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dma::{apply_weights, DmaWeights};
use crate::error::{Error, Result};
use crate::geometry::{wavelength, wavenumber, ArrayLayout, PolarPosition};
use crate::seed;

/// Per-element amplitude model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainModel {
    /// `a = 1` for every element.
    #[default]
    Unit,
    /// `a = lambda / (4 pi d)`.
    FreeSpace,
}

/// A layout together with the carrier and gain model needed to turn
/// positions into channel signatures.
#[derive(Debug, Clone)]
pub struct ArrayModel {
    pub layout: ArrayLayout,
    pub carrier_hz: f64,
    pub gain: GainModel,
}

impl ArrayModel {
    pub fn new(layout: ArrayLayout, carrier_hz: f64, gain: GainModel) -> Result<Self> {
        if !(carrier_hz > 0.0 && carrier_hz.is_finite()) {
            return Err(Error::Config(format!(
                "carrier must be positive, got {carrier_hz}"
            )));
        }
        Ok(ArrayModel {
            layout,
            carrier_hz,
            gain,
        })
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    /// Writes `a_n exp(-j v_n(pos))` into `out`, using `offsets` as scratch.
    ///
    /// The phase is split as `k d + k (d_n - d)` so the large common term is
    /// factored out once; element-to-element phase differences keep full
    /// precision.
    pub fn signature_into(&self, pos: PolarPosition, offsets: &mut [f64], out: &mut [Complex64]) {
        let k = wavenumber(self.carrier_hz);
        self.layout.path_offsets(pos, offsets);
        let common = Complex64::cis(-(k * pos.d).rem_euclid(2.0 * std::f64::consts::PI));
        match self.gain {
            GainModel::Unit => {
                for (o, &off) in out.iter_mut().zip(offsets.iter()) {
                    *o = common * Complex64::cis(-k * off);
                }
            }
            GainModel::FreeSpace => {
                let scale = wavelength(self.carrier_hz) / (4.0 * std::f64::consts::PI);
                for (o, &off) in out.iter_mut().zip(offsets.iter()) {
                    *o = common * Complex64::cis(-k * off) * (scale / (pos.d + off));
                }
            }
        }
    }

    pub fn signature(&self, pos: PolarPosition) -> Vec<Complex64> {
        let mut offsets = vec![0.0; self.len()];
        let mut out = vec![Complex64::default(); self.len()];
        self.signature_into(pos, &mut offsets, &mut out);
        out
    }
}

/// Channel vector for a source at a known position.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub g: Vec<Complex64>,
    pub gain_model: GainModel,
    pub carrier_hz: f64,
    pub source: PolarPosition,
}

pub fn build_channel(
    layout: &ArrayLayout,
    src: PolarPosition,
    carrier_hz: f64,
    gain_model: GainModel,
) -> Result<ChannelRealization> {
    let model = ArrayModel::new(layout.clone(), carrier_hz, gain_model)?;
    Ok(ChannelRealization {
        g: model.signature(src),
        gain_model,
        carrier_hz,
        source: src,
    })
}

/// Attenuation (Np/m) and guided wavenumber (rad/m) of each microstrip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideModel {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl WaveguideModel {
    pub fn uniform(n_strips: usize, alpha: f64, beta: f64) -> Result<Self> {
        let model = WaveguideModel {
            alpha: vec![alpha; n_strips],
            beta: vec![beta; n_strips],
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.beta.len() {
            return Err(Error::Dimension {
                expected: self.alpha.len(),
                found: self.beta.len(),
            });
        }
        if self.alpha.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(Error::Config(
                "waveguide attenuation must be non-negative".into(),
            ));
        }
        if self.beta.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::Config(
                "waveguide wavenumber must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Diagonal of the element-to-port propagation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideMatrix {
    pub diag: Vec<Complex64>,
}

impl WaveguideMatrix {
    pub fn identity(n: usize) -> Self {
        WaveguideMatrix {
            diag: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
}

/// `h_{i,l} = exp(-rho_{i,l} (alpha_i + j beta_i))`.
pub fn build_waveguide_matrix(
    layout: &ArrayLayout,
    model: &WaveguideModel,
) -> Result<WaveguideMatrix> {
    model.validate()?;
    if model.alpha.len() != layout.n_strips() {
        return Err(Error::Dimension {
            expected: layout.n_strips(),
            found: model.alpha.len(),
        });
    }
    let per = layout.per_strip();
    let diag = layout
        .feed_distances()
        .iter()
        .enumerate()
        .map(|(n, &rho)| {
            let i = n / per;
            Complex64::new(-rho * model.alpha[i], -rho * model.beta[i]).exp()
        })
        .collect();
    Ok(WaveguideMatrix { diag })
}

/// Element-domain noise power for a per-element SNR in dB (unit pilot power).
pub fn noise_power_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// The receiver chain that turns element signals into observations.
#[derive(Debug, Clone, Copy)]
pub enum FrontEnd<'a> {
    FullyDigital,
    Dma {
        weights: &'a DmaWeights,
        waveguide: &'a WaveguideMatrix,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationDomain {
    /// One entry per element (`x`).
    Elements,
    /// One entry per microstrip output port (`y`).
    DmaPorts,
}

/// `T` observation vectors of a common dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBatch {
    data: Vec<Complex64>,
    dim: usize,
    pub domain: ObservationDomain,
    pub noise_power: f64,
    pub pilot: Complex64,
    pub seed: u64,
    pub truth: PolarPosition,
}

impl SnapshotBatch {
    /// Wraps externally produced observations, `T` rows of length `dim`.
    pub fn from_observations(
        domain: ObservationDomain,
        dim: usize,
        data: Vec<Complex64>,
        noise_power: f64,
        truth: PolarPosition,
    ) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Dimension {
                expected: dim,
                found: data.len(),
            });
        }
        Ok(SnapshotBatch {
            data,
            dim,
            domain,
            noise_power,
            pilot: Complex64::new(1.0, 0.0),
            seed: 0,
            truth,
        })
    }

    pub fn snapshot_count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn snapshot(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.dim)
    }

    /// `sum_t y_t y_t^H`, row-major `dim x dim`.
    pub fn scatter_matrix(&self) -> Vec<Complex64> {
        let m = self.dim;
        let mut r = vec![Complex64::default(); m * m];
        for y in self.snapshots() {
            for a in 0..m {
                for b in 0..m {
                    r[a * m + b] += y[a] * y[b].conj();
                }
            }
        }
        r
    }
}

/// Parameters of one sampling call.
#[derive(Debug, Clone, Copy)]
pub struct SamplingSpec {
    pub snapshots: usize,
    pub noise_power: f64,
    pub pilot: Complex64,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn new(snapshots: usize, noise_power: f64, seed: u64) -> Self {
        SamplingSpec {
            snapshots,
            noise_power,
            pilot: Complex64::new(1.0, 0.0),
            seed,
        }
    }
}

/// Draws `x_t = g x0 + z_t` and passes it through the front end.
///
/// Element noise is drawn in the same order whatever the front end, so two
/// calls with the same seed and element count share the noise realization.
pub fn sample_snapshots(
    channel: &ChannelRealization,
    front_end: FrontEnd<'_>,
    sampling: SamplingSpec,
) -> Result<SnapshotBatch> {
    if sampling.snapshots == 0 {
        return Err(Error::Config("snapshot count must be at least 1".into()));
    }
    if !(sampling.noise_power >= 0.0 && sampling.noise_power.is_finite()) {
        return Err(Error::Config(format!(
            "noise power must be non-negative, got {}",
            sampling.noise_power
        )));
    }
    let n = channel.g.len();
    let (dim, domain) = match front_end {
        FrontEnd::FullyDigital => (n, ObservationDomain::Elements),
        FrontEnd::Dma { weights, waveguide } => {
            if weights.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: weights.len(),
                });
            }
            if waveguide.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: waveguide.len(),
                });
            }
            (weights.n_strips(), ObservationDomain::DmaPorts)
        }
    };

    let mut rng = seed::rng(sampling.seed);
    let sigma = (sampling.noise_power / 2.0).sqrt();
    let mut x = vec![Complex64::default(); n];
    let mut data = Vec::with_capacity(dim * sampling.snapshots);
    for _ in 0..sampling.snapshots {
        for (xn, gn) in x.iter_mut().zip(&channel.g) {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *xn = gn * sampling.pilot + Complex64::new(sigma * re, sigma * im);
        }
        match front_end {
            FrontEnd::FullyDigital => data.extend_from_slice(&x),
            FrontEnd::Dma { weights, waveguide } => {
                data.extend(apply_weights(weights, waveguide, &x)?);
            }
        }
    }
    Ok(SnapshotBatch {
        data,
        dim,
        domain,
        noise_power: sampling.noise_power,
        pilot: sampling.pilot,
        seed: sampling.seed,
        truth: channel.source,
    })
}
