//! Projection-form likelihoods and the coarse-to-fine maximum-likelihood
//! grid search over `(d, theta)`.
//!
//! Both likelihoods are evaluated in matched-filter form: for a candidate
//! signature `u` and observations `y_t`,
//!
//! ```text
//! L(u) = sum_t |u^H y_t|^2 / ||u||^2
//! ```
//!
//! which equals `sum_t ||P_u y_t||^2` for the rank-one projector
//! `P_u = u (u^H u)^-1 u^H`. The fully-digital case uses `u = s`, the DMA case
//! `u = Q H s`. Dense projectors only exist in [`crate::oracle`].

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dma::{apply_weights, DmaWeights};
use crate::error::{Error, Result};
use crate::geometry::PolarPosition;
use crate::signal::{ArrayModel, ObservationDomain, SnapshotBatch, WaveguideMatrix};

/// Candidates whose effective steering norm falls below this are skipped.
pub const DEGENERACY_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SteeringVector {
    pub s: Vec<Complex64>,
    pub candidate: PolarPosition,
}

pub fn steering_vector(model: &ArrayModel, candidate: PolarPosition) -> SteeringVector {
    SteeringVector {
        s: model.signature(candidate),
        candidate,
    }
}

/// `Q H s`.
pub fn effective_steering(
    s: &SteeringVector,
    waveguide: &WaveguideMatrix,
    w: &DmaWeights,
) -> Result<Vec<Complex64>> {
    apply_weights(w, waveguide, &s.s)
}

fn check_batch(batch: &SnapshotBatch, domain: ObservationDomain, dim: usize) -> Result<()> {
    if batch.domain != domain {
        return Err(Error::Config(format!(
            "expected {domain:?} observations, got {:?}",
            batch.domain
        )));
    }
    if batch.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: batch.dim(),
        });
    }
    Ok(())
}

#[inline]
fn matched_energy(u: &[Complex64], batch: &SnapshotBatch) -> f64 {
    batch
        .snapshots()
        .map(|y| {
            u.iter()
                .zip(y)
                .fold(Complex64::default(), |acc, (a, b)| acc + a.conj() * b)
                .norm_sqr()
        })
        .sum()
}

/// Fully-digital log-likelihood (up to constants) of the candidate `s`.
pub fn fd_objective(batch: &SnapshotBatch, s: &SteeringVector) -> Result<f64> {
    check_batch(batch, ObservationDomain::Elements, s.s.len())?;
    let norm: f64 = s.s.iter().map(|c| c.norm_sqr()).sum();
    if norm.sqrt() < DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateCandidate(s.candidate));
    }
    Ok(matched_energy(&s.s, batch) / norm)
}

/// DMA log-likelihood (up to constants) of the candidate `s` under weights `w`.
pub fn dma_objective(
    batch: &SnapshotBatch,
    s: &SteeringVector,
    waveguide: &WaveguideMatrix,
    w: &DmaWeights,
) -> Result<f64> {
    check_batch(batch, ObservationDomain::DmaPorts, w.n_strips())?;
    let u = effective_steering(s, waveguide, w)?;
    let norm: f64 = u.iter().map(|c| c.norm_sqr()).sum();
    if norm.sqrt() < DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateCandidate(s.candidate));
    }
    Ok(matched_energy(&u, batch) / norm)
}

/// Cells of one search stage, laid out `d`-major.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub stage: usize,
    pub index: usize,
    pub position: PolarPosition,
}

/// Per-worker buffers reused across cells.
#[derive(Debug, Default)]
pub struct Scratch {
    offsets: Vec<f64>,
    signature: Vec<Complex64>,
    re: Vec<f64>,
    im: Vec<f64>,
    u: Vec<Complex64>,
}

impl Scratch {
    fn signature(&mut self, model: &ArrayModel, pos: PolarPosition) -> &[Complex64] {
        let n = model.len();
        self.offsets.resize(n, 0.0);
        self.signature.resize(n, Complex64::default());
        model.signature_into(pos, &mut self.offsets, &mut self.signature);
        &self.signature
    }

    /// Signature at `pos` in split form, left in `self.re` / `self.im`.
    fn split_signature(&mut self, model: &ArrayModel, pos: PolarPosition) {
        self.signature(model, pos);
        self.re.clear();
        self.im.clear();
        self.re.extend(self.signature.iter().map(|c| c.re));
        self.im.extend(self.signature.iter().map(|c| c.im));
    }
}

const LANES: usize = 4;

/// `sum_l conj(a_l) b_l` over split slices, four independent accumulators.
#[inline]
fn dot_conj(a_re: &[f64], a_im: &[f64], b_re: &[f64], b_im: &[f64]) -> Complex64 {
    let n = a_re.len();
    let (a_re, a_im, b_re, b_im) = (&a_re[..n], &a_im[..n], &b_re[..n], &b_im[..n]);
    let mut acc_re = [0.0; LANES];
    let mut acc_im = [0.0; LANES];
    let body = n - n % LANES;
    let mut l = 0;
    while l < body {
        for k in 0..LANES {
            let (ar, ai, br, bi) = (a_re[l + k], a_im[l + k], b_re[l + k], b_im[l + k]);
            acc_re[k] += ar * br + ai * bi;
            acc_im[k] += ar * bi - ai * br;
        }
        l += LANES;
    }
    for l in body..n {
        acc_re[0] += a_re[l] * b_re[l] + a_im[l] * b_im[l];
        acc_im[0] += a_re[l] * b_im[l] - a_im[l] * b_re[l];
    }
    Complex64::new(acc_re.iter().sum(), acc_im.iter().sum())
}

fn norm_sq(re: &[f64], im: &[f64]) -> f64 {
    re.iter().zip(im).map(|(a, b)| a * a + b * b).sum()
}

/// Observations in split form, one row per snapshot.
#[derive(Debug, Clone)]
struct SplitBatch {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitBatch {
    fn new(batch: &SnapshotBatch) -> Self {
        let all: Vec<Complex64> = batch.snapshots().flatten().copied().collect();
        SplitBatch {
            dim: batch.dim(),
            re: all.iter().map(|c| c.re).collect(),
            im: all.iter().map(|c| c.im).collect(),
        }
    }

    fn matched_energy(&self, s_re: &[f64], s_im: &[f64]) -> f64 {
        self.re
            .chunks_exact(self.dim)
            .zip(self.im.chunks_exact(self.dim))
            .map(|(xr, xi)| dot_conj(s_re, s_im, xr, xi).norm_sqr())
            .sum()
    }
}

/// Something the grid search can maximize. `None` marks a degenerate cell.
pub trait Objective: Sync {
    fn evaluate(&self, cell: &Cell, scratch: &mut Scratch) -> Option<f64>;
}

/// Adapts a plain function of the candidate position.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: Fn(PolarPosition) -> Option<f64> + Sync,
{
    fn evaluate(&self, cell: &Cell, _: &mut Scratch) -> Option<f64> {
        (self.0)(cell.position)
    }
}

/// Candidate signatures for every cell of a grid's first stage. Shared by all
/// searches over the same model and grid.
#[derive(Debug, Clone)]
pub struct SteeringTable {
    d_values: Vec<f64>,
    theta_values: Vec<f64>,
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    norms_sq: Vec<f64>,
}

impl SteeringTable {
    pub fn new(model: &ArrayModel, grid: &SearchGrid) -> Self {
        let n = model.len();
        let cells = grid.d_values.len() * grid.theta_values.len();
        let mut re = vec![0.0; cells * n];
        let mut im = vec![0.0; cells * n];
        re.par_chunks_mut(n)
            .zip(im.par_chunks_mut(n))
            .enumerate()
            .for_each_init(Scratch::default, |scratch, (idx, (out_re, out_im))| {
                scratch.split_signature(model, grid.coarse_position(idx));
                out_re.copy_from_slice(&scratch.re);
                out_im.copy_from_slice(&scratch.im);
            });
        let norms_sq = re
            .chunks_exact(n)
            .zip(im.chunks_exact(n))
            .map(|(a, b)| norm_sq(a, b))
            .collect();
        SteeringTable {
            d_values: grid.d_values.clone(),
            theta_values: grid.theta_values.clone(),
            n,
            re,
            im,
            norms_sq,
        }
    }

    fn lookup(&self, cell: &Cell) -> Option<(&[f64], &[f64])> {
        (cell.stage == 0).then(|| {
            let r = cell.index * self.n..(cell.index + 1) * self.n;
            (&self.re[r.clone()], &self.im[r])
        })
    }

    fn fits(&self, model: &ArrayModel, grid: &SearchGrid) -> bool {
        self.n == model.len()
            && self.d_values == grid.d_values
            && self.theta_values == grid.theta_values
    }
}

/// Fully-digital likelihood surface over candidate positions.
pub struct FdLikelihood<'a> {
    model: &'a ArrayModel,
    batch: SplitBatch,
    table: Option<&'a SteeringTable>,
}

impl<'a> FdLikelihood<'a> {
    pub fn new(model: &'a ArrayModel, batch: &SnapshotBatch) -> Result<Self> {
        check_batch(batch, ObservationDomain::Elements, model.len())?;
        Ok(FdLikelihood {
            model,
            batch: SplitBatch::new(batch),
            table: None,
        })
    }

    /// Use precomputed first-stage signatures. The table must come from the
    /// same model and grid that will be searched.
    pub fn with_table(mut self, table: &'a SteeringTable) -> Self {
        self.table = Some(table);
        self
    }

    fn score_split(&self, re: &[f64], im: &[f64], norm: f64) -> Option<f64> {
        (norm.sqrt() >= DEGENERACY_THRESHOLD).then(|| self.batch.matched_energy(re, im) / norm)
    }

    pub fn at(&self, candidate: PolarPosition) -> f64 {
        let mut scratch = Scratch::default();
        scratch.split_signature(self.model, candidate);
        let norm = norm_sq(&scratch.re, &scratch.im);
        self.batch.matched_energy(&scratch.re, &scratch.im) / norm
    }
}

impl Objective for FdLikelihood<'_> {
    fn evaluate(&self, cell: &Cell, scratch: &mut Scratch) -> Option<f64> {
        if let Some(t) = self.table {
            if let Some((re, im)) = t.lookup(cell) {
                return self.score_split(re, im, t.norms_sq[cell.index]);
            }
        }
        scratch.split_signature(self.model, cell.position);
        let norm = norm_sq(&scratch.re, &scratch.im);
        self.score_split(&scratch.re, &scratch.im, norm)
    }
}

/// DMA likelihood surface for a fixed weight configuration.
pub struct DmaLikelihood<'a> {
    model: &'a ArrayModel,
    // conj(q h), split; strip sums u_i = sum_l q h s become conjugate dots
    eff_re: Vec<f64>,
    eff_im: Vec<f64>,
    per_strip: usize,
    // sum_t y_t y_t^H, row-major n_strips x n_strips
    scatter: Vec<Complex64>,
    table: Option<&'a SteeringTable>,
}

impl<'a> DmaLikelihood<'a> {
    pub fn new(
        model: &'a ArrayModel,
        batch: &SnapshotBatch,
        waveguide: &WaveguideMatrix,
        weights: &DmaWeights,
    ) -> Result<Self> {
        check_batch(batch, ObservationDomain::DmaPorts, weights.n_strips())?;
        if weights.len() != model.len() {
            return Err(Error::Dimension {
                expected: model.len(),
                found: weights.len(),
            });
        }
        let eff = weights.effective(waveguide)?;
        Ok(DmaLikelihood {
            model,
            eff_re: eff.iter().map(|c| c.re).collect(),
            eff_im: eff.iter().map(|c| -c.im).collect(),
            per_strip: weights.per_strip(),
            scatter: batch.scatter_matrix(),
            table: None,
        })
    }

    pub fn with_table(mut self, table: &'a SteeringTable) -> Self {
        self.table = Some(table);
        self
    }

    fn score_split(&self, re: &[f64], im: &[f64], u: &mut Vec<Complex64>) -> Option<f64> {
        let ne = self.per_strip;
        u.clear();
        u.extend(
            self.eff_re
                .chunks_exact(ne)
                .zip(self.eff_im.chunks_exact(ne))
                .zip(re.chunks_exact(ne).zip(im.chunks_exact(ne)))
                .map(|((er, ei), (sr, si))| dot_conj(er, ei, sr, si)),
        );
        let norm: f64 = u.iter().map(|c| c.norm_sqr()).sum();
        if norm.sqrt() < DEGENERACY_THRESHOLD {
            return None;
        }
        let m = u.len();
        let mut quad = 0.0;
        for a in 0..m {
            let ru: Complex64 = (0..m).map(|b| self.scatter[a * m + b] * u[b]).sum();
            quad += (u[a].conj() * ru).re;
        }
        Some(quad / norm)
    }

    pub fn at(&self, candidate: PolarPosition) -> Option<f64> {
        let mut scratch = Scratch::default();
        self.evaluate_split(candidate, &mut scratch)
    }

    fn evaluate_split(&self, pos: PolarPosition, scratch: &mut Scratch) -> Option<f64> {
        scratch.split_signature(self.model, pos);
        let Scratch { re, im, u, .. } = scratch;
        self.score_split(re, im, u)
    }
}

impl Objective for DmaLikelihood<'_> {
    fn evaluate(&self, cell: &Cell, scratch: &mut Scratch) -> Option<f64> {
        if let Some(t) = self.table {
            if let Some((re, im)) = t.lookup(cell) {
                return self.score_split(re, im, &mut scratch.u);
            }
        }
        self.evaluate_split(cell.position, scratch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refinement {
    /// Number of refinement stages after the first grid.
    pub stages: usize,
    /// Each stage spans one step of the previous stage on either side of the
    /// incumbent, with a step `shrink` times finer (`2 * shrink + 1` points
    /// per axis).
    pub shrink: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement {
            stages: 3,
            shrink: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub d_values: Vec<f64>,
    pub theta_values: Vec<f64>,
    pub refinement: Refinement,
}

impl SearchGrid {
    pub fn new(d_values: Vec<f64>, theta_values: Vec<f64>, refinement: Refinement) -> Result<Self> {
        if d_values.is_empty() || theta_values.is_empty() {
            return Err(Error::Config("search grid must be nonempty".into()));
        }
        if d_values.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Config("search distances must be positive".into()));
        }
        if theta_values.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("search angles must be finite".into()));
        }
        if d_values.windows(2).any(|w| w[1] <= w[0])
            || theta_values.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config(
                "search axes must be strictly increasing".into(),
            ));
        }
        if refinement.stages > 0 && refinement.shrink < 2 {
            return Err(Error::Config(
                "refinement shrink factor must be at least 2".into(),
            ));
        }
        Ok(SearchGrid {
            d_values,
            theta_values,
            refinement,
        })
    }

    /// `n_d` log-spaced distances on `[d_min, d_max]` and `n_theta` angles
    /// evenly spaced strictly inside `(-π/2, π/2)`.
    pub fn log_polar(
        d_min: f64,
        d_max: f64,
        n_d: usize,
        n_theta: usize,
        refinement: Refinement,
    ) -> Result<Self> {
        if !(d_min > 0.0 && d_max > d_min) {
            return Err(Error::Config(format!(
                "bad distance span [{d_min}, {d_max}]"
            )));
        }
        if n_d < 2 || n_theta < 1 {
            return Err(Error::Config(
                "search grid needs at least 2 distances and 1 angle".into(),
            ));
        }
        let ratio = (d_max / d_min).ln();
        let d_values = (0..n_d)
            .map(|i| d_min * (ratio * i as f64 / (n_d - 1) as f64).exp())
            .collect();
        let step = std::f64::consts::PI / (n_theta + 1) as f64;
        let theta_values = (1..=n_theta)
            .map(|j| -FRAC_PI_2 + j as f64 * step)
            .collect();
        Self::new(d_values, theta_values, refinement)
    }

    /// 60 distances on `[0.05, 1.2] d_F`, 121 angles, 3 stages shrinking 5x.
    pub fn for_fraunhofer(d_fraunhofer: f64) -> Result<Self> {
        Self::log_polar(
            0.05 * d_fraunhofer,
            1.2 * d_fraunhofer,
            60,
            121,
            Refinement::default(),
        )
    }

    pub fn coarse_len(&self) -> usize {
        self.d_values.len() * self.theta_values.len()
    }

    fn coarse_position(&self, idx: usize) -> PolarPosition {
        let nt = self.theta_values.len();
        PolarPosition {
            d: self.d_values[idx / nt],
            theta: self.theta_values[idx % nt],
        }
    }
}

/// Objective values over one stage's grid, `d`-major.
#[derive(Debug, Clone)]
pub struct LikelihoodSurface {
    pub d_values: Vec<f64>,
    pub theta_values: Vec<f64>,
    /// `-inf` marks degenerate cells.
    pub values: Vec<f64>,
    pub argmax: (usize, usize),
    pub best: PolarPosition,
    pub best_value: f64,
}

impl LikelihoodSurface {
    pub fn value(&self, i_d: usize, i_theta: usize) -> f64 {
        self.values[i_d * self.theta_values.len() + i_theta]
    }

    /// CSV with columns `d,theta,value`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        wtr.write_record(["d", "theta", "value"])
            .map_err(|e| Error::csv(path, e))?;
        for (i, d) in self.d_values.iter().enumerate() {
            for (j, t) in self.theta_values.iter().enumerate() {
                wtr.write_record([d.to_string(), t.to_string(), self.value(i, j).to_string()])
                    .map_err(|e| Error::csv(path, e))?;
            }
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub estimate: PolarPosition,
    pub value: f64,
    pub stages: Vec<LikelihoodSurface>,
    pub evaluations: usize,
}

impl SearchOutcome {
    pub fn surface(&self) -> &LikelihoodSurface {
        self.stages.last().expect("at least one stage")
    }
}

fn local_step(values: &[f64], i: usize) -> f64 {
    let left = if i > 0 {
        values[i] - values[i - 1]
    } else {
        0.0
    };
    let right = if i + 1 < values.len() {
        values[i + 1] - values[i]
    } else {
        0.0
    };
    left.max(right)
}

fn evaluate_stage<O: Objective + ?Sized>(
    objective: &O,
    stage: usize,
    d_values: Vec<f64>,
    theta_values: Vec<f64>,
) -> Result<LikelihoodSurface> {
    let nt = theta_values.len();
    let total = d_values.len() * nt;
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map_init(Scratch::default, |scratch, index| {
            let cell = Cell {
                stage,
                index,
                position: PolarPosition {
                    d: d_values[index / nt],
                    theta: theta_values[index % nt],
                },
            };
            match objective.evaluate(&cell, scratch) {
                Some(v) if !v.is_nan() => v,
                _ => f64::NEG_INFINITY,
            }
        })
        .collect();

    // first strict maximum in d-major order: ties go to the smallest d,
    // then the smallest theta
    let mut best: Option<(usize, f64)> = None;
    for (idx, &v) in values.iter().enumerate() {
        if v > f64::NEG_INFINITY && best.map_or(true, |(_, b)| v > b) {
            best = Some((idx, v));
        }
    }
    let (idx, best_value) = best.ok_or_else(|| {
        Error::EstimationFailure(format!("every cell of search stage {stage} is degenerate"))
    })?;
    let argmax = (idx / nt, idx % nt);
    let best = PolarPosition {
        d: d_values[argmax.0],
        theta: theta_values[argmax.1],
    };
    Ok(LikelihoodSurface {
        d_values,
        theta_values,
        values,
        argmax,
        best,
        best_value,
    })
}

/// Maximize `objective` over `grid`, refining around each stage's argmax.
pub fn grid_search_mle<O: Objective + ?Sized>(
    objective: &O,
    grid: &SearchGrid,
) -> Result<SearchOutcome> {
    let mut stages = Vec::with_capacity(grid.refinement.stages + 1);
    let first = evaluate_stage(
        objective,
        0,
        grid.d_values.clone(),
        grid.theta_values.clone(),
    )?;
    let mut evaluations = first.values.len();
    let mut step_d = local_step(&first.d_values, first.argmax.0);
    let mut step_t = local_step(&first.theta_values, first.argmax.1);
    let mut center = first.best;
    stages.push(first);

    let shrink = grid.refinement.shrink;
    for stage in 1..=grid.refinement.stages {
        let (fine_d, fine_t) = (step_d / shrink as f64, step_t / shrink as f64);
        let offsets = -(shrink as i64)..=(shrink as i64);
        let mut d_values: Vec<f64> = offsets
            .clone()
            .map(|j| center.d + j as f64 * fine_d)
            .filter(|&d| d > 0.0)
            .collect();
        let mut theta_values: Vec<f64> = offsets
            .map(|j| center.theta + j as f64 * fine_t)
            .filter(|t| t.abs() < FRAC_PI_2)
            .collect();
        d_values.dedup();
        theta_values.dedup();
        if !theta_values.contains(&center.theta) {
            // incumbent on the boundary of the angular domain
            theta_values = vec![center.theta];
        }
        let surface = evaluate_stage(objective, stage, d_values, theta_values)?;
        evaluations += surface.values.len();
        center = surface.best;
        step_d = fine_d;
        step_t = fine_t;
        stages.push(surface);
    }
    let last = stages.last().expect("at least one stage");
    Ok(SearchOutcome {
        estimate: last.best,
        value: last.best_value,
        evaluations,
        stages,
    })
}

/// Maximum-likelihood estimate from fully-digital snapshots.
pub fn estimate_fd(
    model: &ArrayModel,
    batch: &SnapshotBatch,
    grid: &SearchGrid,
    table: Option<&SteeringTable>,
) -> Result<SearchOutcome> {
    let mut lik = FdLikelihood::new(model, batch)?;
    if let Some(t) = table.filter(|t| t.fits(model, grid)) {
        lik = lik.with_table(t);
    }
    grid_search_mle(&lik, grid)
}

/// Maximum-likelihood estimate from DMA port snapshots taken under `weights`.
pub fn estimate_dma(
    model: &ArrayModel,
    batch: &SnapshotBatch,
    waveguide: &WaveguideMatrix,
    weights: &DmaWeights,
    grid: &SearchGrid,
    table: Option<&SteeringTable>,
) -> Result<SearchOutcome> {
    let mut lik = DmaLikelihood::new(model, batch, waveguide, weights)?;
    if let Some(t) = table.filter(|t| t.fits(model, grid)) {
        lik = lik.with_table(t);
    }
    grid_search_mle(&lik, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dma::{project_lorentzian, random_weights, tune_weights, Regime};
    use crate::geometry::{wavelength, ArrayLayout};
    use crate::oracle;
    use crate::signal::{
        build_channel, build_waveguide_matrix, sample_snapshots, FrontEnd, GainModel, SamplingSpec,
        WaveguideModel,
    };
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const F28: f64 = 28e9;

    struct Setup {
        model: ArrayModel,
        wg_model: WaveguideModel,
        wg: WaveguideMatrix,
    }

    fn setup(n_strips: usize, per_strip: usize) -> Setup {
        let lam = wavelength(F28);
        let layout = ArrayLayout::uniform(n_strips, per_strip, lam / 2.0, lam / 2.0).unwrap();
        let wg_model = WaveguideModel::uniform(n_strips, 0.5, 2.0 * PI / lam).unwrap();
        let wg = build_waveguide_matrix(&layout, &wg_model).unwrap();
        Setup {
            model: ArrayModel::new(layout, F28, GainModel::Unit).unwrap(),
            wg_model,
            wg,
        }
    }

    fn fd_batch(
        st: &Setup,
        truth: PolarPosition,
        t: usize,
        noise: f64,
        seed: u64,
    ) -> SnapshotBatch {
        let ch = build_channel(&st.model.layout, truth, F28, GainModel::Unit).unwrap();
        sample_snapshots(
            &ch,
            FrontEnd::FullyDigital,
            SamplingSpec::new(t, noise, seed),
        )
        .unwrap()
    }

    fn dma_batch(
        st: &Setup,
        w: &DmaWeights,
        truth: PolarPosition,
        t: usize,
        noise: f64,
        seed: u64,
    ) -> SnapshotBatch {
        let ch = build_channel(&st.model.layout, truth, F28, GainModel::Unit).unwrap();
        let fe = FrontEnd::Dma {
            weights: w,
            waveguide: &st.wg,
        };
        sample_snapshots(&ch, fe, SamplingSpec::new(t, noise, seed)).unwrap()
    }

    fn small_grid(stages: usize) -> SearchGrid {
        SearchGrid::log_polar(0.3, 3.0, 12, 15, Refinement { stages, shrink: 5 }).unwrap()
    }

    #[test]
    fn noiseless_fd_at_truth_captures_everything() {
        let st = setup(3, 8);
        let truth = PolarPosition::new(1.2, 0.4).unwrap();
        let batch = fd_batch(&st, truth, 7, 0.0, 1);
        let v = fd_objective(&batch, &steering_vector(&st.model, truth)).unwrap();
        // unit gains: ||g||^2 = N
        assert_relative_eq!(v, 7.0 * 24.0, max_relative = 1e-12);
        let off = fd_objective(
            &batch,
            &steering_vector(&st.model, PolarPosition::new(1.0, 0.3).unwrap()),
        )
        .unwrap();
        assert!(off < v);
    }

    #[test]
    fn noiseless_tuned_dma_at_truth() {
        let st = setup(3, 8);
        let truth = PolarPosition::new(1.5, -0.2).unwrap();
        let w =
            project_lorentzian(&tune_weights(&st.model.layout, &st.wg_model, truth, F28).unwrap());
        let batch = dma_batch(&st, &w, truth, 5, 0.0, 2);
        let s = steering_vector(&st.model, truth);
        let v = dma_objective(&batch, &s, &st.wg, &w).unwrap();
        let qhg: f64 = effective_steering(&s, &st.wg, &w)
            .unwrap()
            .iter()
            .map(|c| c.norm_sqr())
            .sum();
        assert_relative_eq!(v, 5.0 * qhg, max_relative = 1e-12);
    }

    #[test]
    fn matched_filter_agrees_with_dense_projectors() {
        let st = setup(3, 6);
        let truth = PolarPosition::new(0.8, 0.5).unwrap();
        let fd = fd_batch(&st, truth, 9, 0.3, 3);
        let w = random_weights(&st.model.layout, Regime::Lorentzian, 4);
        let dma = dma_batch(&st, &w, truth, 9, 0.3, 5);
        for cand in [(0.5, -0.7), (0.8, 0.5), (2.0, 1.1)] {
            let s = steering_vector(&st.model, PolarPosition::new(cand.0, cand.1).unwrap());
            let fast = fd_objective(&fd, &s).unwrap();
            let dense = oracle::projected_energy(&oracle::fd_projector(&s.s).unwrap(), &fd);
            assert_relative_eq!(fast, dense, max_relative = 1e-10);

            let fast = dma_objective(&dma, &s, &st.wg, &w).unwrap();
            let p = oracle::dma_projector(&w, &st.wg, &s.s).unwrap();
            assert_relative_eq!(
                fast,
                oracle::projected_energy(&p, &dma),
                max_relative = 1e-10
            );

            let lik = DmaLikelihood::new(&st.model, &dma, &st.wg, &w).unwrap();
            assert_relative_eq!(lik.at(s.candidate).unwrap(), fast, max_relative = 1e-10);
        }
    }

    #[test]
    fn effective_steering_is_strip_sum_for_trivial_weights() {
        let st = setup(2, 4);
        let w = DmaWeights::from_phases(2, 4, vec![0.0; 8], Regime::PhaseOnly).unwrap();
        let s = steering_vector(&st.model, PolarPosition::new(1.0, 0.2).unwrap());
        let u = effective_steering(&s, &WaveguideMatrix::identity(8), &w).unwrap();
        for i in 0..2 {
            let sum: Complex64 = s.s[i * 4..(i + 1) * 4].iter().sum();
            assert!((u[i] - sum).norm() < 1e-14);
        }
    }

    #[test]
    fn objectives_ignore_steering_scale() {
        let st = setup(3, 5);
        let truth = PolarPosition::new(1.0, 0.1).unwrap();
        let fd = fd_batch(&st, truth, 4, 1.0, 6);
        let w = random_weights(&st.model.layout, Regime::Lorentzian, 7);
        let dma = dma_batch(&st, &w, truth, 4, 1.0, 8);
        let s = steering_vector(&st.model, PolarPosition::new(1.3, 0.0).unwrap());
        let c = Complex64::new(-2.5, 0.7);
        let scaled = SteeringVector {
            s: s.s.iter().map(|x| x * c).collect(),
            candidate: s.candidate,
        };
        assert_relative_eq!(
            fd_objective(&fd, &s).unwrap(),
            fd_objective(&fd, &scaled).unwrap(),
            max_relative = 1e-10
        );
        assert_relative_eq!(
            dma_objective(&dma, &s, &st.wg, &w).unwrap(),
            dma_objective(&dma, &scaled, &st.wg, &w).unwrap(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn silenced_strip_is_ignored() {
        let st = setup(3, 4);
        // (j + exp(j 3π/2)) / 2 = 0 on strip 0
        let mut phases = vec![0.3; 12];
        phases[..4].fill(1.5 * PI);
        let w = DmaWeights::from_phases(3, 4, phases, Regime::Lorentzian).unwrap();
        let truth = PolarPosition::new(1.0, 0.3).unwrap();
        let batch = dma_batch(&st, &w, truth, 6, 0.5, 9);
        let mut data: Vec<Complex64> = batch.snapshots().flatten().copied().collect();
        for (n, y) in data.iter_mut().enumerate() {
            if n % 3 == 0 {
                *y += Complex64::new(10.0 * n as f64, -3.0);
            }
        }
        let altered =
            SnapshotBatch::from_observations(ObservationDomain::DmaPorts, 3, data, 0.5, truth)
                .unwrap();
        let s = steering_vector(&st.model, PolarPosition::new(0.9, 0.1).unwrap());
        assert_relative_eq!(
            dma_objective(&batch, &s, &st.wg, &w).unwrap(),
            dma_objective(&altered, &s, &st.wg, &w).unwrap(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn degenerate_candidates() {
        let st = setup(2, 3);
        let w = DmaWeights::from_phases(2, 3, vec![1.5 * PI; 6], Regime::Lorentzian).unwrap();
        let truth = PolarPosition::new(1.0, 0.0).unwrap();
        let batch = dma_batch(&st, &w, truth, 2, 0.1, 10);
        let s = steering_vector(&st.model, truth);
        assert!(matches!(
            dma_objective(&batch, &s, &st.wg, &w),
            Err(Error::DegenerateCandidate(_))
        ));
        let lik = DmaLikelihood::new(&st.model, &batch, &st.wg, &w).unwrap();
        assert!(matches!(
            grid_search_mle(&lik, &small_grid(1)),
            Err(Error::EstimationFailure(_))
        ));
    }

    #[test]
    fn degenerate_cells_are_skipped() {
        let grid = small_grid(0);
        let obj = FnObjective(|p: PolarPosition| (p.d > 1.0).then(|| -p.d));
        let out = grid_search_mle(&obj, &grid).unwrap();
        assert!(out.estimate.d > 1.0);
        assert!(out.surface().values.contains(&f64::NEG_INFINITY));
    }

    #[test]
    fn wrong_domain_is_rejected() {
        let st = setup(2, 3);
        let truth = PolarPosition::new(1.0, 0.0).unwrap();
        let batch = fd_batch(&st, truth, 2, 0.1, 11);
        let w = random_weights(&st.model.layout, Regime::Lorentzian, 1);
        assert!(DmaLikelihood::new(&st.model, &batch, &st.wg, &w).is_err());
        let short = setup(2, 2);
        assert!(fd_objective(&batch, &steering_vector(&short.model, truth)).is_err());
    }

    #[test]
    fn synthetic_bowl_is_located() {
        let grid = small_grid(3);
        let (d0, t0) = (1.234_567, 0.321);
        let obj =
            FnObjective(move |p: PolarPosition| Some(-(p.d - d0).powi(2) - (p.theta - t0).powi(2)));
        let out = grid_search_mle(&obj, &grid).unwrap();
        let last = out.surface();
        let step_d = last.d_values[1] - last.d_values[0];
        let step_t = last.theta_values[1] - last.theta_values[0];
        assert!((out.estimate.d - d0).abs() <= step_d / 2.0 + 1e-12);
        assert!((out.estimate.theta - t0).abs() <= step_t / 2.0 + 1e-12);
        assert_eq!(out.stages.len(), 4);
        assert_eq!(out.evaluations, 12 * 15 + 3 * 121);
    }

    #[test]
    fn ties_go_to_smallest_d_then_theta() {
        let grid = small_grid(2);
        let out = grid_search_mle(&FnObjective(|_| Some(1.0)), &grid).unwrap();
        assert_eq!(out.stages[0].argmax, (0, 0));
        for s in &out.stages {
            assert_eq!(s.argmax, (0, 0));
            assert!(s.values.iter().all(|&v| v <= s.best_value));
        }
    }

    #[test]
    fn noiseless_truth_on_grid_is_recovered_exactly() {
        let st = setup(3, 10);
        let grid = small_grid(3);
        let truth = PolarPosition {
            d: grid.d_values[5],
            theta: grid.theta_values[9],
        };
        let batch = fd_batch(&st, truth, 3, 0.0, 12);
        let table = SteeringTable::new(&st.model, &grid);
        let out = estimate_fd(&st.model, &batch, &grid, Some(&table)).unwrap();
        assert_eq!(out.estimate, truth);
        let plain = estimate_fd(&st.model, &batch, &grid, None).unwrap();
        assert_eq!(plain.estimate, truth);
        assert_eq!(plain.value, out.value);
    }

    #[test]
    fn single_stage_matches_exhaustive_search() {
        let st = setup(3, 6);
        let grid = small_grid(0);
        for seed in 0..5 {
            let truth =
                PolarPosition::new(0.5 + 0.3 * seed as f64, -0.6 + 0.25 * seed as f64).unwrap();
            let w = random_weights(&st.model.layout, Regime::Lorentzian, 100 + seed);
            let batch = dma_batch(&st, &w, truth, 8, 0.5, 200 + seed);
            let out = estimate_dma(&st.model, &batch, &st.wg, &w, &grid, None).unwrap();
            let (pos, val) = oracle::exhaustive_argmax(&grid.d_values, &grid.theta_values, |p| {
                let s = steering_vector(&st.model, p);
                oracle::dma_projector(&w, &st.wg, &s.s)
                    .map(|p| oracle::projected_energy(&p, &batch))
            })
            .unwrap();
            assert_eq!(out.estimate, pos);
            assert_relative_eq!(out.value, val, max_relative = 1e-9);
        }
    }

    #[test]
    fn surface_csv_has_every_cell() {
        let grid = small_grid(0);
        let out = grid_search_mle(&FnObjective(|p: PolarPosition| Some(p.d)), &grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surface.csv");
        out.surface().write_csv(&path).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["d", "theta", "value"]);
        assert_eq!(rdr.records().count(), grid.coarse_len());
    }

    #[test]
    fn grid_validation() {
        assert!(SearchGrid::new(vec![], vec![0.0], Refinement::default()).is_err());
        assert!(SearchGrid::new(vec![-1.0, 1.0], vec![0.0], Refinement::default()).is_err());
        assert!(SearchGrid::new(vec![2.0, 1.0], vec![0.0], Refinement::default()).is_err());
        let g = SearchGrid::for_fraunhofer(24.0).unwrap();
        assert_eq!(g.d_values.len(), 60);
        assert_eq!(g.theta_values.len(), 121);
        assert_relative_eq!(g.d_values[0], 1.2, max_relative = 1e-12);
        assert_relative_eq!(g.d_values[59], 28.8, max_relative = 1e-12);
        assert!(g.theta_values.iter().all(|t| t.abs() < PI / 2.0));
        assert_relative_eq!(g.theta_values[60], 0.0, epsilon = 1e-12);
    }

    fn range_variation(per_strip: usize) -> f64 {
        let lam = wavelength(F28);
        let layout = ArrayLayout::uniform(5, per_strip, lam / 2.0, lam / 2.0).unwrap();
        let model = ArrayModel::new(layout, F28, GainModel::Unit).unwrap();
        let truth = PolarPosition::new(6.0, PI / 3.0).unwrap();
        let ch = build_channel(&model.layout, truth, F28, GainModel::Unit).unwrap();
        let batch =
            sample_snapshots(&ch, FrontEnd::FullyDigital, SamplingSpec::new(1, 0.0, 0)).unwrap();
        let lik = FdLikelihood::new(&model, &batch).unwrap();
        let vals: Vec<f64> = (0..=200)
            .map(|i| {
                lik.at(PolarPosition {
                    d: 3.0 * 4f64.powf(i as f64 / 200.0),
                    theta: truth.theta,
                })
            })
            .collect();
        let peak = vals.iter().cloned().fold(f64::MIN, f64::max);
        let low = vals.iter().cloned().fold(f64::MAX, f64::min);
        (peak - low) / peak
    }

    #[test]
    fn far_field_loses_range_near_field_keeps_it() {
        let far = range_variation(9);
        let near = range_variation(48);
        assert!(far < 0.01, "far-field variation {far}");
        assert!(near > 0.03, "near-field variation {near}");
        assert!(near > 50.0 * far);
    }

    #[test]
    fn noiseless_near_field_argmax_is_unique() {
        let lam = wavelength(F28);
        let layout = ArrayLayout::uniform(5, 48, lam / 2.0, lam / 2.0).unwrap();
        let wg_model = WaveguideModel::uniform(5, 0.5, 2.0 * PI / lam).unwrap();
        let wg = build_waveguide_matrix(&layout, &wg_model).unwrap();
        let model = ArrayModel::new(layout, F28, GainModel::Unit).unwrap();
        let truth = PolarPosition::new(6.0, PI / 3.0).unwrap();
        let ch = build_channel(&model.layout, truth, F28, GainModel::Unit).unwrap();
        let grid = SearchGrid::log_polar(1.2, 28.8, 60, 121, Refinement::default()).unwrap();
        let mut d_values = grid.d_values.clone();
        d_values.push(truth.d);
        d_values.sort_by(f64::total_cmp);
        let mut theta_values = grid.theta_values.clone();
        theta_values.push(truth.theta);
        theta_values.sort_by(f64::total_cmp);
        let grid = SearchGrid::new(
            d_values,
            theta_values,
            Refinement {
                stages: 0,
                shrink: 5,
            },
        )
        .unwrap();

        let fd =
            sample_snapshots(&ch, FrontEnd::FullyDigital, SamplingSpec::new(1, 0.0, 0)).unwrap();
        let out = estimate_fd(&model, &fd, &grid, None).unwrap();
        assert_eq!(out.estimate, truth);
        let second = out
            .surface()
            .values
            .iter()
            .filter(|&&v| v >= out.value * (1.0 - 1e-12))
            .count();
        assert_eq!(second, 1);

        let w = project_lorentzian(&tune_weights(&model.layout, &wg_model, truth, F28).unwrap());
        let y = sample_snapshots(
            &ch,
            FrontEnd::Dma {
                weights: &w,
                waveguide: &wg,
            },
            SamplingSpec::new(1, 0.0, 0),
        )
        .unwrap();
        let out = estimate_dma(&model, &y, &wg, &w, &grid, None).unwrap();
        assert_eq!(out.estimate, truth);
    }
}
