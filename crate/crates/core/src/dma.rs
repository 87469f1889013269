//! Microstrip element weights: the Lorentzian and phase-only constraint
//! sets, focusing (tuning) rule, projection and application.
//!
//! Weights are stored as phases; the complex coefficient is materialized on
//! demand according to the regime:
//!
//! * Lorentzian: `q = (j + exp(j phi)) / 2`, a circle of radius 1/2 about `j/2`.
//! * Phase-only: `q = exp(j phi)`.
//!
//! As a matrix, row `i` of `Q` is nonzero only on the columns of strip `i`,
//! so nothing here ever builds the dense `N_d x N` form.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wavenumber, wrap_phase, ArrayLayout, PolarPosition};
use crate::seed;
use crate::signal::{WaveguideMatrix, WaveguideModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Lorentzian,
    PhaseOnly,
}

impl Regime {
    #[inline]
    pub fn coefficient(self, phase: f64) -> Complex64 {
        match self {
            Regime::Lorentzian => (Complex64::i() + Complex64::cis(phase)) * 0.5,
            Regime::PhaseOnly => Complex64::cis(phase),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Lorentzian => "lorentzian",
            Regime::PhaseOnly => "phase_only",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lorentzian" => Ok(Regime::Lorentzian),
            "phase_only" => Ok(Regime::PhaseOnly),
            other => Err(Error::Config(format!("unknown weight regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmaWeights {
    n_strips: usize,
    per_strip: usize,
    phases: Vec<f64>,
    regime: Regime,
}

impl DmaWeights {
    /// Phases are strip-major and reduced to `[0, 2π)`.
    pub fn from_phases(
        n_strips: usize,
        per_strip: usize,
        phases: Vec<f64>,
        regime: Regime,
    ) -> Result<Self> {
        let n = n_strips * per_strip;
        if n == 0 {
            return Err(Error::Config(
                "weights need at least one strip and one element".into(),
            ));
        }
        if phases.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: phases.len(),
            });
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("weight phases must be finite".into()));
        }
        Ok(DmaWeights {
            n_strips,
            per_strip,
            phases: phases.into_iter().map(wrap_phase).collect(),
            regime,
        })
    }

    pub fn n_strips(&self) -> usize {
        self.n_strips
    }

    pub fn per_strip(&self) -> usize {
        self.per_strip
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    #[inline]
    pub fn coefficient(&self, n: usize) -> Complex64 {
        self.regime.coefficient(self.phases[n])
    }

    pub fn coefficients(&self) -> Vec<Complex64> {
        self.phases
            .iter()
            .map(|&p| self.regime.coefficient(p))
            .collect()
    }

    /// Same phase field rematerialized under another regime.
    pub fn with_regime(&self, regime: Regime) -> DmaWeights {
        DmaWeights {
            regime,
            ..self.clone()
        }
    }

    /// `q_n h_n` for every element: the per-element factor applied before
    /// summing each strip.
    pub fn effective(&self, waveguide: &WaveguideMatrix) -> Result<Vec<Complex64>> {
        if waveguide.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                found: waveguide.len(),
            });
        }
        Ok(self
            .phases
            .iter()
            .zip(&waveguide.diag)
            .map(|(&p, h)| self.regime.coefficient(p) * h)
            .collect())
    }

    /// Hash of the phase field. The regime is not included.
    pub fn checksum(&self) -> u64 {
        seed::checksum(&self.phases)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for (n, &phase) in self.phases.iter().enumerate() {
            wtr.serialize(WeightRow {
                i: n / self.per_strip,
                l: n % self.per_strip,
                phase_radians: phase,
                regime: self.regime,
            })
            .map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut cells = BTreeMap::new();
        let mut regime = None;
        for row in rdr.deserialize::<WeightRow>() {
            let row = row.map_err(|e| Error::csv(path, e))?;
            match regime {
                None => regime = Some(row.regime),
                Some(r) if r != row.regime => {
                    return Err(Error::Parse {
                        path: path.into(),
                        reason: "mixed regimes".into(),
                    })
                }
                _ => {}
            }
            if cells.insert((row.i, row.l), row.phase_radians).is_some() {
                return Err(Error::Parse {
                    path: path.into(),
                    reason: format!("duplicate element ({}, {})", row.i, row.l),
                });
            }
        }
        let regime = regime.ok_or_else(|| Error::Parse {
            path: path.into(),
            reason: "no rows".into(),
        })?;
        let n_strips = cells.keys().map(|k| k.0).max().unwrap_or(0) + 1;
        let per_strip = cells.keys().map(|k| k.1).max().unwrap_or(0) + 1;
        if cells.len() != n_strips * per_strip {
            return Err(Error::Parse {
                path: path.into(),
                reason: format!(
                    "expected {} elements, found {}",
                    n_strips * per_strip,
                    cells.len()
                ),
            });
        }
        // BTreeMap iterates (i, l) in strip-major order
        DmaWeights::from_phases(n_strips, per_strip, cells.into_values().collect(), regime)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightRow {
    i: usize,
    l: usize,
    phase_radians: f64,
    regime: Regime,
}

/// I.i.d. phases, uniform on `[0, 2π)`.
pub fn random_weights(layout: &ArrayLayout, regime: Regime, seed: u64) -> DmaWeights {
    let mut rng = seed::rng(seed);
    let phases = (0..layout.len())
        .map(|_| rng.random_range(0.0..2.0 * std::f64::consts::PI))
        .collect();
    DmaWeights {
        n_strips: layout.n_strips(),
        per_strip: layout.per_strip(),
        phases,
        regime,
    }
}

/// Phase-only weights that co-phase every element of each strip for a
/// source at `focus`: `psi = v(focus) + rho * beta`.
pub fn tune_weights(
    layout: &ArrayLayout,
    waveguide: &WaveguideModel,
    focus: PolarPosition,
    carrier_hz: f64,
) -> Result<DmaWeights> {
    waveguide.validate()?;
    if waveguide.beta.len() != layout.n_strips() {
        return Err(Error::Dimension {
            expected: layout.n_strips(),
            found: waveguide.beta.len(),
        });
    }
    let k = wavenumber(carrier_hz);
    let mut offsets = vec![0.0; layout.len()];
    layout.path_offsets(focus, &mut offsets);
    // v = k d + k (d_n - d); the common part is reduced once
    let common = (k * focus.d).rem_euclid(2.0 * std::f64::consts::PI);
    let per = layout.per_strip();
    let phases = offsets
        .iter()
        .zip(layout.feed_distances())
        .enumerate()
        .map(|(n, (&off, &rho))| wrap_phase(common + k * off + rho * waveguide.beta[n / per]))
        .collect();
    Ok(DmaWeights {
        n_strips: layout.n_strips(),
        per_strip: per,
        phases,
        regime: Regime::PhaseOnly,
    })
}

/// Carries the phase field onto the Lorentzian set: `q = (j + exp(j psi)) / 2`.
pub fn project_lorentzian(w: &DmaWeights) -> DmaWeights {
    w.with_regime(Regime::Lorentzian)
}

/// `Q H v` without materializing `Q`: `out_i = sum_l q_il h_il v_il`.
pub fn apply_weights(
    w: &DmaWeights,
    waveguide: &WaveguideMatrix,
    v: &[Complex64],
) -> Result<Vec<Complex64>> {
    if v.len() != w.len() {
        return Err(Error::Dimension {
            expected: w.len(),
            found: v.len(),
        });
    }
    let eff = w.effective(waveguide)?;
    Ok(strip_sums(&eff, v, w.per_strip))
}

#[inline]
pub(crate) fn strip_sums(
    effective: &[Complex64],
    v: &[Complex64],
    per_strip: usize,
) -> Vec<Complex64> {
    effective
        .chunks_exact(per_strip)
        .zip(v.chunks_exact(per_strip))
        .map(|(e, x)| e.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Received signal energy at the ports for channel `g`:
/// `sum_i |sum_l q_il h_il g_il|^2`. This is what tuning maximizes.
pub fn focusing_gain(w: &DmaWeights, waveguide: &WaveguideMatrix, g: &[Complex64]) -> Result<f64> {
    Ok(apply_weights(w, waveguide, g)?
        .iter()
        .map(|c| c.norm_sqr())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{wavelength, PolarPosition};
    use crate::oracle;
    use crate::signal::{build_channel, build_waveguide_matrix, GainModel};
    use std::f64::consts::PI;

    const F28: f64 = 28e9;

    fn layout() -> ArrayLayout {
        ArrayLayout::uniform(3, 5, 0.004, 0.005).unwrap()
    }

    #[test]
    fn random_weights_structure() {
        let lay = layout();
        let w = random_weights(&lay, Regime::Lorentzian, 11);
        assert_eq!(w.len(), 15);
        for q in w.coefficients() {
            assert!(((q - Complex64::new(0.0, 0.5)).norm() - 0.5).abs() < 1e-12);
        }
        assert!(w.phases().iter().all(|&p| (0.0..2.0 * PI).contains(&p)));
        let dense = oracle::dense_q(&w);
        for i in 0..3 {
            for col in 0..15 {
                if col / 5 != i {
                    assert_eq!(dense[(i, col)], Complex64::default());
                }
            }
        }
        assert_eq!(w, random_weights(&lay, Regime::Lorentzian, 11));
        assert_ne!(w, random_weights(&lay, Regime::Lorentzian, 12));
        for q in random_weights(&lay, Regime::PhaseOnly, 3).coefficients() {
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tuning_broadside_far_focus_gives_equal_phases() {
        // negligible beta, focus far away on the array normal: the element
        // paths agree to within k z^2 / 2d ~ 1e-7 rad
        let lay = ArrayLayout::uniform(2, 4, 0.01, 0.01).unwrap();
        let wg = WaveguideModel::uniform(2, 0.0, 1e-300).unwrap();
        let w = tune_weights(&lay, &wg, PolarPosition::new(1e7, 0.0).unwrap(), F28).unwrap();
        for p in w.phases() {
            let diff = (p - w.phases()[0]).abs();
            assert!(diff.min(2.0 * PI - diff) < 1e-6, "{:?}", w.phases());
        }
    }

    #[test]
    fn tuned_phase_is_path_plus_feed() {
        // v = pi/3 from the path, rho beta = pi/6 from the feed
        let lambda = wavelength(F28);
        let d = 100.0 * lambda + lambda / 6.0;
        let lay = ArrayLayout::from_parts(1, 1, vec![[0.0; 3]], vec![0.01], [0.0; 3]).unwrap();
        let wg = WaveguideModel::uniform(1, 0.3, (PI / 6.0) / 0.01).unwrap();
        let w = tune_weights(&lay, &wg, PolarPosition::new(d, 0.2).unwrap(), F28).unwrap();
        assert!((w.phases()[0] - PI / 2.0).abs() < 1e-9);
        assert_eq!(w.regime(), Regime::PhaseOnly);
    }

    #[test]
    fn projection_values() {
        let w =
            DmaWeights::from_phases(1, 3, vec![0.0, PI / 2.0, 3.0 * PI / 2.0], Regime::PhaseOnly)
                .unwrap();
        let q = project_lorentzian(&w).coefficients();
        assert!((q[0] - Complex64::new(0.5, 0.5)).norm() < 1e-15);
        assert!((q[1] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(q[2].norm() < 1e-15);
    }

    #[test]
    fn projection_keeps_phase_field() {
        let lay = layout();
        let wg = WaveguideModel::uniform(3, 0.5, 500.0).unwrap();
        let tuned = tune_weights(&lay, &wg, PolarPosition::new(2.0, 0.5).unwrap(), F28).unwrap();
        let proj = project_lorentzian(&tuned);
        let back = proj.with_regime(Regime::PhaseOnly);
        assert_eq!(back, tuned);
        for (q, p) in proj.coefficients().iter().zip(tuned.phases()) {
            let arg = (q - Complex64::new(0.0, 0.5)).arg();
            let diff = (arg - p).rem_euclid(2.0 * PI);
            assert!(diff.min(2.0 * PI - diff) < 1e-12);
        }
    }

    #[test]
    fn apply_weights_cases() {
        let lay = layout();
        let ones = DmaWeights::from_phases(3, 5, vec![0.0; 15], Regime::PhaseOnly).unwrap();
        let h = WaveguideMatrix::identity(15);
        let v: Vec<Complex64> = (0..15)
            .map(|n| Complex64::new(n as f64, -(n as f64) / 2.0))
            .collect();
        let out = apply_weights(&ones, &h, &v).unwrap();
        for i in 0..3 {
            let want: Complex64 = v[i * 5..(i + 1) * 5].iter().sum();
            assert!((out[i] - want).norm() < 1e-12);
        }

        let w = random_weights(&lay, Regime::Lorentzian, 4);
        let hw =
            build_waveguide_matrix(&lay, &WaveguideModel::uniform(3, 0.5, 400.0).unwrap()).unwrap();
        let got = apply_weights(&w, &hw, &v).unwrap();
        let want = oracle::dense_dma_output(&w, &hw, &v);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12);
        }

        let v2: Vec<Complex64> = (0..15).map(|n| Complex64::new(1.0, n as f64)).collect();
        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-2.0, 0.5));
        let mix: Vec<Complex64> = v.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
        let lhs = apply_weights(&w, &hw, &mix).unwrap();
        let r1 = apply_weights(&w, &hw, &v).unwrap();
        let r2 = apply_weights(&w, &hw, &v2).unwrap();
        for i in 0..3 {
            assert!((lhs[i] - (a * r1[i] + b * r2[i])).norm() < 1e-10);
        }

        assert!(matches!(
            apply_weights(&w, &hw, &v[..14]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn tuned_weights_cophase_the_true_channel() {
        let lay = layout();
        let model = WaveguideModel::uniform(3, 0.5, 2.0 * PI / wavelength(F28)).unwrap();
        let h = build_waveguide_matrix(&lay, &model).unwrap();
        let src = PolarPosition::new(1.3, 0.8).unwrap();
        let g = build_channel(&lay, src, F28, GainModel::FreeSpace)
            .unwrap()
            .g;
        let w = tune_weights(&lay, &model, src, F28).unwrap();
        let eff = w.effective(&h).unwrap();
        for (n, (e, gn)) in eff.iter().zip(&g).enumerate() {
            let term = e * gn;
            assert!(term.im.abs() < 1e-9 * term.norm(), "element {n}: {term}");
            assert!(term.re > 0.0);
            let expected = gn.norm() * (-lay.feed_distances()[n] * 0.5).exp();
            assert!((term.re - expected).abs() < 1e-9 * expected);
        }
    }

    #[test]
    fn tuned_gain_dominates_random() {
        let lay = layout();
        let model = WaveguideModel::uniform(3, 0.5, 600.0).unwrap();
        let h = build_waveguide_matrix(&lay, &model).unwrap();
        let src = PolarPosition::new(1.3, -0.6).unwrap();
        let g = build_channel(&lay, src, F28, GainModel::Unit).unwrap().g;
        let tuned = tune_weights(&lay, &model, src, F28).unwrap();
        let best = focusing_gain(&tuned, &h, &g).unwrap();
        let bound: f64 = (0..3)
            .map(|i| {
                (0..5)
                    .map(|l| (h.diag[i * 5 + l] * g[i * 5 + l]).norm())
                    .sum::<f64>()
                    .powi(2)
            })
            .sum();
        assert!((best - bound).abs() < 1e-9 * bound);
        for s in 0..1000 {
            let w = random_weights(&lay, Regime::PhaseOnly, s);
            assert!(focusing_gain(&w, &h, &g).unwrap() <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let w = random_weights(&layout(), Regime::Lorentzian, 77);
        w.write_csv(&path).unwrap();
        assert_eq!(DmaWeights::read_csv(&path).unwrap(), w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("i,l,phase_radians,regime\n0,0,"));
    }
}
