//! Reference computations used to cross-check the fast paths.
//!
//! Everything here is written the slow, literal way: dense matrices,
//! exhaustive enumeration, Cartesian coordinates. None of it shares code with
//! the routines it checks. The `selfcheck` CLI command and the test suites
//! both use these.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dma::DmaWeights;
use crate::geometry::{PolarPosition, SPEED_OF_LIGHT};
use crate::signal::{GainModel, SnapshotBatch, WaveguideMatrix};

pub type CMatrix = DMatrix<Complex64>;

/// Straight-line distance from a 3-D element position to a source in the
/// X-Y plane, with the array reference at the origin.
pub fn euclidean_distance(element: [f64; 3], src: PolarPosition) -> f64 {
    let sx = src.d * src.theta.cos();
    let sy = src.d * src.theta.sin();
    ((element[0] - sx).powi(2) + (element[1] - sy).powi(2) + element[2].powi(2)).sqrt()
}

/// `a exp(-j 2 pi f d / c)` for one element, evaluated directly.
pub fn channel_entry(
    element: [f64; 3],
    src: PolarPosition,
    carrier_hz: f64,
    gain: GainModel,
) -> Complex64 {
    let d = euclidean_distance(element, src);
    let a = match gain {
        GainModel::Unit => 1.0,
        GainModel::FreeSpace => (SPEED_OF_LIGHT / carrier_hz) / (4.0 * PI * d),
    };
    Complex64::from_polar(a, -2.0 * PI * carrier_hz * d / SPEED_OF_LIGHT)
}

/// Dense `N_d x N` weight matrix with the block structure written out.
pub fn dense_q(w: &DmaWeights) -> CMatrix {
    let (nd, ne) = (w.n_strips(), w.per_strip());
    let coeffs = w.coefficients();
    let mut q = CMatrix::zeros(nd, nd * ne);
    for i in 0..nd {
        for l in 0..ne {
            q[(i, i * ne + l)] = coeffs[i * ne + l];
        }
    }
    q
}

pub fn dense_h(h: &WaveguideMatrix) -> CMatrix {
    let n = h.len();
    let mut m = CMatrix::zeros(n, n);
    for k in 0..n {
        m[(k, k)] = h.diag[k];
    }
    m
}

/// `y = Q H v` by explicit triple loop.
pub fn dense_dma_output(w: &DmaWeights, h: &WaveguideMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let q = dense_q(w);
    let hm = dense_h(h);
    let n = v.len();
    (0..q.nrows())
        .map(|row| {
            let mut acc = Complex64::default();
            for m in 0..n {
                for k in 0..n {
                    acc += q[(row, m)] * hm[(m, k)] * v[k];
                }
            }
            acc
        })
        .collect()
}

pub fn column(v: &[Complex64]) -> CMatrix {
    CMatrix::from_column_slice(v.len(), 1, v)
}

/// `A (A^H A)^-1 A^H` for a full-column-rank `A`.
pub fn projector(a: &CMatrix) -> Option<CMatrix> {
    let gram = a.adjoint() * a;
    let inv = gram.try_inverse()?;
    Some(a * inv * a.adjoint())
}

pub fn fd_projector(s: &[Complex64]) -> Option<CMatrix> {
    projector(&column(s))
}

/// Projector onto `Q H s`, assembled from the dense factors.
pub fn dma_projector(w: &DmaWeights, h: &WaveguideMatrix, s: &[Complex64]) -> Option<CMatrix> {
    projector(&(dense_q(w) * dense_h(h) * column(s)))
}

/// `sum_t ||P y_t||^2`, written as `tr[P sum_t y_t y_t^H]`.
pub fn projected_energy(p: &CMatrix, batch: &SnapshotBatch) -> f64 {
    let m = batch.dim();
    let mut scatter = CMatrix::zeros(m, m);
    for y in batch.snapshots() {
        let col = column(y);
        scatter += &col * col.adjoint();
    }
    (p * scatter).trace().re
}

/// Covariance of `Q H z` for white element noise of power `noise_power`.
pub fn dma_noise_covariance(w: &DmaWeights, h: &WaveguideMatrix, noise_power: f64) -> CMatrix {
    let qh = dense_q(w) * dense_h(h);
    (&qh * qh.adjoint()) * Complex64::new(noise_power, 0.0)
}

/// Idempotency, Hermitian and trace residuals of a projector.
pub fn projector_residuals(p: &CMatrix) -> (f64, f64, f64) {
    let idem = (p * p - p).norm();
    let herm = (p - p.adjoint()).norm();
    let trace = (p.trace() - Complex64::new(1.0, 0.0)).norm();
    (idem, herm, trace)
}

/// Exhaustive search of `|sum_l c_l exp(j psi_l)|^2` over a `levels`-point
/// phase grid per element. The first phase is pinned to zero because the
/// objective ignores a common rotation. Returns the best grid phases and value.
pub fn phase_grid_search(c: &[Complex64], levels: usize) -> (Vec<f64>, f64) {
    assert!(!c.is_empty() && levels > 0);
    let step = 2.0 * PI / levels as f64;
    let tables: Vec<Vec<Complex64>> = c
        .iter()
        .map(|&cl| {
            (0..levels)
                .map(|k| cl * Complex64::cis(k as f64 * step))
                .collect()
        })
        .collect();

    fn recurse(
        tables: &[Vec<Complex64>],
        depth: usize,
        partial: Complex64,
        idx: &mut Vec<usize>,
        best: &mut (Vec<usize>, f64),
    ) {
        if depth == tables.len() {
            let v = partial.norm_sqr();
            if v > best.1 {
                *best = (idx.clone(), v);
            }
            return;
        }
        for (k, t) in tables[depth].iter().enumerate() {
            idx.push(k);
            recurse(tables, depth + 1, partial + t, idx, best);
            idx.pop();
        }
    }

    let mut best = (vec![0; c.len()], f64::NEG_INFINITY);
    let mut idx = vec![0usize];
    recurse(&tables, 1, tables[0][0], &mut idx, &mut best);
    let phases = best.0.iter().map(|&k| k as f64 * step).collect();
    (phases, best.1)
}

/// Value of the single-strip focusing objective at arbitrary phases.
pub fn strip_focus_value(c: &[Complex64], phases: &[f64]) -> f64 {
    c.iter()
        .zip(phases)
        .map(|(cl, &p)| cl * Complex64::cis(p))
        .sum::<Complex64>()
        .norm_sqr()
}

/// Exhaustive single-stage argmax with the same tie-breaking rule as the
/// grid search (first strict maximum in `d`-major order).
pub fn exhaustive_argmax<F>(
    d_values: &[f64],
    theta_values: &[f64],
    f: F,
) -> Option<(PolarPosition, f64)>
where
    F: Fn(PolarPosition) -> Option<f64>,
{
    let mut best: Option<(PolarPosition, f64)> = None;
    for &d in d_values {
        for &theta in theta_values {
            let pos = PolarPosition { d, theta };
            if let Some(v) = f(pos) {
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((pos, v));
                }
            }
        }
    }
    best
}

/// Smallest absolute difference between two angles, modulo 2π.
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}
