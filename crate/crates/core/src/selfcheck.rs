//! Oracle checks runnable from the command line.
//!
//! Each check compares a fast routine with its slow counterpart in
//! [`crate::oracle`] on seeded random instances and reports the worst
//! discrepancy seen.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;

use crate::dma::{random_weights, tune_weights, DmaWeights, Regime};
use crate::geometry::{wavelength, ArrayLayout, PolarPosition};
use crate::likelihood::{dma_objective, fd_objective, steering_vector};
use crate::oracle;
use crate::seed;
use crate::signal::{
    build_channel, build_waveguide_matrix, sample_snapshots, ArrayModel, ChannelRealization,
    FrontEnd, GainModel, SamplingSpec, WaveguideModel,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

const F28: f64 = 28e9;

fn random_layout(rng: &mut impl Rng, max_strips: usize, max_per_strip: usize) -> ArrayLayout {
    let lam = wavelength(F28);
    let n_strips = rng.random_range(1..=max_strips);
    let per_strip = rng.random_range(1..=max_per_strip);
    let spacing = lam * rng.random_range(0.2..1.0);
    let pitch = lam * rng.random_range(0.2..1.0);
    ArrayLayout::uniform(n_strips, per_strip, spacing, pitch).expect("valid random layout")
}

fn random_position(rng: &mut impl Rng, d_min: f64, d_max: f64) -> PolarPosition {
    PolarPosition {
        d: rng.random_range(d_min..d_max),
        theta: rng.random_range(-1.5..1.5),
    }
}

/// Polar-form element distance against the Cartesian formula.
pub fn polar_distance(cases: usize, seed: u64) -> Check {
    let mut rng = seed::rng(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < cases {
        let layout = random_layout(&mut rng, 8, 64);
        for _ in 0..100.min(cases - done) {
            let src = PolarPosition {
                d: 10f64.powf(rng.random_range(-1.5..3.0)),
                theta: rng.random_range(-PI..PI),
            };
            let strip = rng.random_range(0..layout.n_strips());
            let element = rng.random_range(0..layout.per_strip());
            let fast = layout
                .element_source_distance(strip, element, src)
                .expect("valid index");
            let slow = oracle::euclidean_distance(
                layout.position(strip, element).expect("valid index"),
                src,
            );
            worst = worst.max((fast - slow).abs() / slow);
            done += 1;
        }
    }
    Check {
        name: "polar distance",
        passed: worst <= 1e-12,
        detail: format!("{cases} cases, worst relative error {worst:.2e} (limit 1e-12)"),
    }
}

/// Dense fully-digital and DMA projectors are rank-one orthogonal projectors.
pub fn projector_properties(instances: usize, seed: u64) -> Check {
    let mut rng = seed::rng(seed);
    let mut worst: f64 = 0.0;
    let mut max_n = 0;
    for k in 0..instances {
        let layout = random_layout(&mut rng, 4, 16);
        max_n = max_n.max(layout.len());
        let model =
            ArrayModel::new(layout.clone(), F28, GainModel::FreeSpace).expect("valid model");
        let wg_model = WaveguideModel::uniform(
            layout.n_strips(),
            rng.random_range(0.0..5.0),
            rng.random_range(100.0..900.0),
        )
        .expect("valid waveguide");
        let wg = build_waveguide_matrix(&layout, &wg_model).expect("valid waveguide");
        let w = random_weights(&layout, Regime::Lorentzian, seed::derive(seed, &[k as u64]));
        let s = model.signature(random_position(&mut rng, 0.2, 20.0));
        for p in [oracle::fd_projector(&s), oracle::dma_projector(&w, &wg, &s)]
            .into_iter()
            .flatten()
        {
            let (idem, herm, trace) = oracle::projector_residuals(&p);
            worst = worst.max(idem).max(herm).max(trace);
        }
    }
    Check {
        name: "projector properties",
        passed: worst <= 1e-9,
        detail: format!(
            "{instances} instances, N <= {max_n}, worst residual {worst:.2e} (limit 1e-9)"
        ),
    }
}

/// Matched-filter objectives against `tr[P R]` with dense projectors.
pub fn likelihood_forms(instances: usize, seed: u64) -> Check {
    let mut rng = seed::rng(seed);
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let layout = random_layout(&mut rng, 4, 12);
        let model = ArrayModel::new(layout.clone(), F28, GainModel::Unit).expect("valid model");
        let wg_model = WaveguideModel::uniform(layout.n_strips(), 0.5, 2.0 * PI / wavelength(F28))
            .expect("valid");
        let wg = build_waveguide_matrix(&layout, &wg_model).expect("valid waveguide");
        let w = random_weights(
            &layout,
            Regime::Lorentzian,
            seed::derive(seed, &[k as u64, 1]),
        );
        let truth = random_position(&mut rng, 0.3, 5.0);
        let ch = build_channel(&layout, truth, F28, GainModel::Unit).expect("valid channel");
        let sampling = SamplingSpec::new(
            8,
            rng.random_range(0.01..2.0),
            seed::derive(seed, &[k as u64, 2]),
        );
        let x = sample_snapshots(&ch, FrontEnd::FullyDigital, sampling).expect("valid sampling");
        let y = sample_snapshots(
            &ch,
            FrontEnd::Dma {
                weights: &w,
                waveguide: &wg,
            },
            sampling,
        )
        .expect("valid sampling");
        let s = steering_vector(&model, random_position(&mut rng, 0.3, 5.0));

        let fast = fd_objective(&x, &s).expect("nondegenerate");
        let dense = oracle::projected_energy(&oracle::fd_projector(&s.s).expect("full rank"), &x);
        worst = worst.max((fast - dense).abs() / dense.abs().max(f64::MIN_POSITIVE));
        if let (Ok(fast), Some(p)) = (
            dma_objective(&y, &s, &wg, &w),
            oracle::dma_projector(&w, &wg, &s.s),
        ) {
            let dense = oracle::projected_energy(&p, &y);
            worst = worst.max((fast - dense).abs() / dense.abs().max(f64::MIN_POSITIVE));
        }
    }
    Check {
        name: "likelihood forms",
        passed: worst <= 1e-10,
        detail: format!("{instances} instances, worst relative gap {worst:.2e} (limit 1e-10)"),
    }
}

/// Closed-form phase-only tuning against exhaustive search over a phase
/// grid, one 4-element strip at a time.
pub fn tuning_brute_force(instances: usize, levels: usize, seed: u64) -> Check {
    const PER_STRIP: usize = 4;
    let mut rng = seed::rng(seed);
    let step = 2.0 * PI / levels as f64;
    let mut worst_gap: f64 = 0.0;
    let mut dominated = 0;
    for _ in 0..instances {
        let lam = wavelength(F28);
        let layout =
            ArrayLayout::uniform(1, PER_STRIP, lam * rng.random_range(0.1..1.0), lam / 2.0)
                .expect("valid layout");
        let wg_model = WaveguideModel::uniform(
            1,
            rng.random_range(0.0..20.0),
            rng.random_range(100.0..1500.0),
        )
        .expect("valid waveguide");
        let wg = build_waveguide_matrix(&layout, &wg_model).expect("valid waveguide");
        let src = random_position(&mut rng, 0.05, 10.0);
        let ch: ChannelRealization =
            build_channel(&layout, src, F28, GainModel::FreeSpace).expect("valid channel");
        let c: Vec<Complex64> = ch.g.iter().zip(&wg.diag).map(|(g, h)| g * h).collect();

        let tuned = tune_weights(&layout, &wg_model, src, F28).expect("valid tuning");
        let psi = tuned.phases();
        let (grid_phases, grid_best) = oracle::phase_grid_search(&c, levels);
        let tuned_value = oracle::strip_focus_value(&c, psi);
        if tuned_value < grid_best * (1.0 - 1e-12) {
            dominated += 1;
        }
        for l in 1..PER_STRIP {
            worst_gap = worst_gap.max(oracle::angle_gap(psi[l] - psi[0], grid_phases[l]));
        }
    }
    Check {
        name: "tuning brute force",
        passed: worst_gap <= step && dominated == 0,
        detail: format!(
            "{instances} strips, worst phase gap {worst_gap:.2e} rad (limit {step:.2e}), {dominated} beaten by the grid"
        ),
    }
}

/// Sample covariance of DMA output noise against `noise Q H H^H Q^H`.
pub fn noise_covariance(snapshots: usize, seed: u64) -> Check {
    let mut rng = seed::rng(seed);
    let layout = random_layout(&mut rng, 4, 8);
    let noise = rng.random_range(0.1..3.0);
    let wg_model =
        WaveguideModel::uniform(layout.n_strips(), 0.5, 2.0 * PI / wavelength(F28)).expect("valid");
    let wg = build_waveguide_matrix(&layout, &wg_model).expect("valid waveguide");
    let w = random_weights(&layout, Regime::Lorentzian, seed::derive(seed, &[1]));
    let silent = ChannelRealization {
        g: vec![Complex64::default(); layout.len()],
        gain_model: GainModel::Unit,
        carrier_hz: F28,
        source: PolarPosition { d: 1.0, theta: 0.0 },
    };
    let y = sample_snapshots(
        &silent,
        FrontEnd::Dma {
            weights: &w,
            waveguide: &wg,
        },
        SamplingSpec::new(snapshots, noise, seed::derive(seed, &[2])),
    )
    .expect("valid sampling");
    let m = y.dim();
    let scatter = y.scatter_matrix();
    let expected = oracle::dma_noise_covariance(&w, &wg, noise);
    let mut diff = 0.0;
    for a in 0..m {
        for b in 0..m {
            diff += (scatter[a * m + b] / snapshots as f64 - expected[(a, b)]).norm_sqr();
        }
    }
    let rel = diff.sqrt() / expected.norm();
    Check {
        name: "noise covariance",
        passed: rel <= 0.05,
        detail: format!(
            "T = {snapshots}, {m} ports, relative Frobenius error {rel:.3} (limit 0.05)"
        ),
    }
}

/// Tuned weights collect more port energy from the true source than random
/// ones.
pub fn tuning_beats_random(trials: usize, seed: u64) -> Check {
    let mut rng = seed::rng(seed);
    let layout = random_layout(&mut rng, 5, 16);
    let wg_model =
        WaveguideModel::uniform(layout.n_strips(), 0.5, 2.0 * PI / wavelength(F28)).expect("valid");
    let wg = build_waveguide_matrix(&layout, &wg_model).expect("valid waveguide");
    let src = random_position(&mut rng, 0.3, 5.0);
    let ch = build_channel(&layout, src, F28, GainModel::Unit).expect("valid channel");
    let tuned = tune_weights(&layout, &wg_model, src, F28).expect("valid tuning");
    let gain = |w: &DmaWeights| crate::dma::focusing_gain(w, &wg, &ch.g).expect("matching sizes");
    let best = gain(&tuned);
    let beaten = (0..trials)
        .filter(|&t| {
            gain(&random_weights(
                &layout,
                Regime::PhaseOnly,
                seed::derive(seed, &[t as u64]),
            )) > best
        })
        .count();
    Check {
        name: "tuning beats random",
        passed: beaten == 0,
        detail: format!("{trials} random phase-only configurations, {beaten} above the tuned gain"),
    }
}

/// The full suite at command-line sizes.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        polar_distance(10_000, seed::derive(seed, &[1])),
        projector_properties(100, seed::derive(seed, &[2])),
        likelihood_forms(50, seed::derive(seed, &[3])),
        tuning_brute_force(10, 256, seed::derive(seed, &[4])),
        noise_covariance(100_000, seed::derive(seed, &[5])),
        tuning_beats_random(1000, seed::derive(seed, &[6])),
    ]
}
