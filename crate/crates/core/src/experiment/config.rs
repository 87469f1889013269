//! Scenario configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! snr_db = [-10, -5, 0]
//! trials = 50
//!
//! [dma_quarter]
//! per_strip = 96
//! spacing_wavelengths = 0.25
//!
//! [heatmap]
//! points = 31
//! ```
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are rejected.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wavelength, ArrayLayout, PolarPosition};
use crate::likelihood::{Refinement, SearchGrid};
use crate::signal::{GainModel, WaveguideModel};

/// SNR values in dB. `inf` means noiseless; JSON has no literal for it, so
/// non-finite values are written as text and read back from either form.
mod snr_serde {
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else {
            Repr::Text(v.to_string())
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t
                .trim()
                .parse()
                .map_err(|_| E::custom(format!("`{t}` is not an SNR in dB"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|&x| to_repr(x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?
                .into_iter()
                .map(from_repr::<D::Error>)
                .collect::<Result<_, _>>()
                .map_err(D::Error::custom)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    FullyDigital,
    DmaHalf,
    DmaQuarter,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::FullyDigital => "fully_digital",
            Architecture::DmaHalf => "dma_half",
            Architecture::DmaQuarter => "dma_quarter",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fully_digital" => Ok(Architecture::FullyDigital),
            "dma_half" => Ok(Architecture::DmaHalf),
            "dma_quarter" => Ok(Architecture::DmaQuarter),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Strip count and element spacing of one array. Lengths are in carrier
/// wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_strips: usize,
    pub per_strip: usize,
    pub spacing_wavelengths: f64,
    #[serde(default = "half")]
    pub pitch_wavelengths: f64,
}

fn half() -> f64 {
    0.5
}

impl ArrayConfig {
    fn new(n_strips: usize, per_strip: usize, spacing_wavelengths: f64) -> Self {
        ArrayConfig {
            n_strips,
            per_strip,
            spacing_wavelengths,
            pitch_wavelengths: 0.5,
        }
    }

    pub fn layout(&self, carrier_hz: f64) -> Result<ArrayLayout> {
        let lam = wavelength(carrier_hz);
        ArrayLayout::uniform(
            self.n_strips,
            self.per_strip,
            self.spacing_wavelengths * lam,
            self.pitch_wavelengths * lam,
        )
    }

    /// Extent of one strip, counting one spacing per element.
    pub fn strip_length_m(&self, carrier_hz: f64) -> f64 {
        self.per_strip as f64 * self.spacing_wavelengths * wavelength(carrier_hz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub d_m: f64,
    pub theta_rad: f64,
}

/// Waveguide attenuation (Np/m) and wavenumber (rad/m). A missing `beta`
/// means the free-space wavenumber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideConfig {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub n_d: usize,
    pub n_theta: usize,
    pub stages: usize,
    pub shrink: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        // [0.05, 1.2] x 24 m
        SearchConfig {
            d_min_m: 1.2,
            d_max_m: 28.8,
            n_d: 60,
            n_theta: 121,
            stages: 3,
            shrink: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapConfig {
    pub x_min_m: f64,
    pub x_max_m: f64,
    pub y_min_m: f64,
    pub y_max_m: f64,
    /// Grid points per axis.
    pub points: usize,
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub trials: usize,
    pub architecture: Architecture,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        HeatmapConfig {
            x_min_m: 0.0,
            x_max_m: 9.0,
            y_min_m: 0.0,
            y_max_m: 9.0,
            points: 31,
            snr_db: -5.0,
            trials: 20,
            architecture: Architecture::DmaHalf,
        }
    }
}

impl HeatmapConfig {
    pub fn resolution_m(&self) -> f64 {
        (self.x_max_m - self.x_min_m) / (self.points - 1) as f64
    }
}

/// The short-aperture array whose Fraunhofer distance lies well inside the
/// source range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FarFieldConfig {
    pub array: ArrayConfig,
    pub fraunhofer_m: f64,
    pub d_m: f64,
}

impl Default for FarFieldConfig {
    fn default() -> Self {
        FarFieldConfig {
            // 9 x λ/2 ≈ 5 cm strips
            array: ArrayConfig::new(5, 9, 0.5),
            fraunhofer_m: 2.0,
            d_m: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub carrier_hz: f64,
    #[serde(with = "snr_serde::list")]
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub snapshots: usize,
    pub iterations: usize,
    pub resample_per_iteration: bool,
    pub gain: GainModel,
    pub fraunhofer_m: f64,
    pub truth: TruthConfig,
    pub fully_digital: ArrayConfig,
    pub dma_half: ArrayConfig,
    pub dma_quarter: ArrayConfig,
    pub waveguide: WaveguideConfig,
    pub search: SearchConfig,
    pub heatmap: HeatmapConfig,
    pub far_field: FarFieldConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 20_240_601,
            carrier_hz: 28e9,
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            trials: 100,
            snapshots: 64,
            iterations: 5,
            resample_per_iteration: true,
            gain: GainModel::Unit,
            fraunhofer_m: 24.0,
            truth: TruthConfig {
                d_m: 6.0,
                theta_rad: PI / 3.0,
            },
            fully_digital: ArrayConfig::new(5, 48, 0.5),
            dma_half: ArrayConfig::new(5, 48, 0.5),
            dma_quarter: ArrayConfig::new(5, 96, 0.25),
            waveguide: WaveguideConfig {
                alpha: 0.5,
                beta: None,
            },
            search: SearchConfig::default(),
            heatmap: HeatmapConfig::default(),
            far_field: FarFieldConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return bad(format!(
                "carrier_hz must be positive, got {}",
                self.carrier_hz
            ));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| s.is_nan()) {
            return bad("snr_db must list at least one value".into());
        }
        if self.trials == 0 || self.heatmap.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.snapshots == 0 {
            return bad("snapshots must be at least 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.truth.d_m > 0.0) || !(self.truth.theta_rad.abs() < FRAC_PI_2) {
            return bad("truth must lie in front of the array".into());
        }
        if !(self.far_field.d_m > 0.0) {
            return bad("far_field.d_m must be positive".into());
        }
        for (name, a) in [
            ("fully_digital", &self.fully_digital),
            ("dma_half", &self.dma_half),
            ("dma_quarter", &self.dma_quarter),
            ("far_field.array", &self.far_field.array),
        ] {
            if a.n_strips == 0 || a.per_strip == 0 {
                return bad(format!("{name}: strip and element counts must be positive"));
            }
            if !(a.spacing_wavelengths > 0.0 && a.pitch_wavelengths > 0.0) {
                return bad(format!("{name}: spacing and pitch must be positive"));
            }
        }
        let fd = self.fully_digital.strip_length_m(self.carrier_hz);
        for (name, a) in [
            ("dma_half", &self.dma_half),
            ("dma_quarter", &self.dma_quarter),
        ] {
            let len = a.strip_length_m(self.carrier_hz);
            if a.n_strips != self.fully_digital.n_strips || (len - fd).abs() > 1e-9 * fd.max(1.0) {
                return bad(format!(
                    "{name} must span the same aperture as fully_digital"
                ));
            }
        }
        if !(self.waveguide.alpha >= 0.0) || self.waveguide.beta.is_some_and(|b| !b.is_finite()) {
            return bad("waveguide alpha must be non-negative and beta finite".into());
        }
        let h = &self.heatmap;
        if h.points < 2 || !(h.x_max_m > h.x_min_m) || !(h.y_max_m > h.y_min_m) {
            return bad("heatmap needs at least 2 points per axis and a positive extent".into());
        }
        self.grid().map(|_| ())
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.carrier_hz)
    }

    pub fn truth(&self) -> PolarPosition {
        PolarPosition {
            d: self.truth.d_m,
            theta: self.truth.theta_rad,
        }
    }

    pub fn far_truth(&self) -> PolarPosition {
        PolarPosition {
            d: self.far_field.d_m,
            theta: self.truth.theta_rad,
        }
    }

    pub fn array(&self, arch: Architecture) -> &ArrayConfig {
        match arch {
            Architecture::FullyDigital => &self.fully_digital,
            Architecture::DmaHalf => &self.dma_half,
            Architecture::DmaQuarter => &self.dma_quarter,
        }
    }

    pub fn layout(&self, arch: Architecture) -> Result<ArrayLayout> {
        self.array(arch).layout(self.carrier_hz)
    }

    pub fn waveguide_model(&self, n_strips: usize) -> Result<WaveguideModel> {
        let beta = self.waveguide.beta.unwrap_or(2.0 * PI / self.wavelength());
        WaveguideModel::uniform(n_strips, self.waveguide.alpha, beta)
    }

    pub fn grid(&self) -> Result<SearchGrid> {
        let s = &self.search;
        SearchGrid::log_polar(
            s.d_min_m,
            s.d_max_m,
            s.n_d,
            s.n_theta,
            Refinement {
                stages: s.stages,
                shrink: s.shrink,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn noiseless_snr_survives_toml_and_json() {
        let cfg = ScenarioConfig::from_toml_str("snr_db = [-5, inf, \"inf\"]\n").unwrap();
        assert_eq!(cfg.snr_db, vec![-5.0, f64::INFINITY, f64::INFINITY]);
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains(r#""snr_db":[-5.0,"inf","inf"]"#), "{json}");
        let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert!(ScenarioConfig::from_toml_str("snr_db = [\"loud\"]\n").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ScenarioConfig::from_toml_str("seed = 5\ntrials = 3\n[heatmap]\npoints = 11\n")
            .unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.heatmap.points, 11);
        assert_eq!(cfg.heatmap.trials, 20);
        assert_eq!(cfg.dma_quarter.per_strip, 96);
    }

    #[test]
    fn rejects_unknown_and_invalid_keys() {
        assert!(ScenarioConfig::from_toml_str("sed = 5")
            .unwrap_err()
            .is_config());
        assert!(ScenarioConfig::from_toml_str("trials = 0").is_err());
        assert!(ScenarioConfig::from_toml_str(
            "[dma_half]\nn_strips = 5\nper_strip = 40\nspacing_wavelengths = 0.5"
        )
        .is_err());
        assert!(ScenarioConfig::from_toml_str("[search]\nd_min_m = 3.0\nd_max_m = 1.0").is_err());
    }

    #[test]
    fn default_arrays_share_an_aperture() {
        let cfg = ScenarioConfig::default();
        let fd = cfg.layout(Architecture::FullyDigital).unwrap();
        let q = cfg.layout(Architecture::DmaQuarter).unwrap();
        assert_eq!(fd.len(), 240);
        assert_eq!(q.len(), 480);
        let far = cfg.far_field.array.strip_length_m(cfg.carrier_hz);
        assert!((far - 0.05).abs() < 0.003, "{far}");
    }
}
