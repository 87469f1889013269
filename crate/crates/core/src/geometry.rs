//! Array layout, source positions and spherical-wavefront path lengths.
//!
//! Elements are indexed `(strip, element)`, both zero-based, and stored
//! strip-major: flat index `strip * per_strip + element`. The source lives in
//! the X-Y plane and is addressed in polar form `(d, theta)` relative to the
//! array reference point.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const TWO_PI: f64 = 2.0 * PI;

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

pub fn wavenumber(carrier_hz: f64) -> f64 {
    TWO_PI / wavelength(carrier_hz)
}

/// Phase accumulated over `distance` meters at `carrier_hz`, not reduced mod 2π.
pub fn phase_delay(distance: f64, carrier_hz: f64) -> f64 {
    TWO_PI * carrier_hz * distance / SPEED_OF_LIGHT
}

/// `v_{i,l}`: propagation phase from the source to element `(strip, element)`.
pub fn element_phase(
    layout: &ArrayLayout,
    strip: usize,
    element: usize,
    src: PolarPosition,
    carrier_hz: f64,
) -> Result<f64> {
    Ok(phase_delay(
        layout.element_source_distance(strip, element, src)?,
        carrier_hz,
    ))
}

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Reduce an angle to `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = (theta + PI).rem_euclid(TWO_PI) - PI;
    if r >= PI {
        -PI
    } else {
        r
    }
}

/// Source or candidate position: range `d` (m) from the array reference and
/// angle `theta` (rad) in the X-Y plane, measured from the array normal (+X).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPosition {
    pub d: f64,
    pub theta: f64,
}

impl PolarPosition {
    pub fn new(d: f64, theta: f64) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Config(format!("range must be positive, got {d}")));
        }
        if !theta.is_finite() {
            return Err(Error::Config(format!("angle must be finite, got {theta}")));
        }
        Ok(PolarPosition {
            d,
            theta: wrap_angle(theta),
        })
    }

    pub fn from_cartesian(x: f64, y: f64) -> Result<Self> {
        Self::new(x.hypot(y), y.atan2(x))
    }

    /// Planar (x, y) coordinates relative to the reference point.
    pub fn to_xy(self) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.d * c, self.d * s]
    }

    /// Euclidean distance between the two positions in the plane.
    pub fn distance_to(self, other: PolarPosition) -> f64 {
        let [x0, y0] = self.to_xy();
        let [x1, y1] = other.to_xy();
        (x0 - x1).hypot(y0 - y1)
    }

    /// True when the position lies strictly in front of the aperture.
    pub fn in_front(self) -> bool {
        self.theta.abs() < PI / 2.0
    }
}

impl fmt::Display for PolarPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(d = {:.4} m, theta = {:.5} rad)", self.d, self.theta)
    }
}

/// Physical element layout of a strip-organized array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    n_strips: usize,
    per_strip: usize,
    positions: Vec<[f64; 3]>,
    feed_distances: Vec<f64>,
    element_spacing: f64,
    strip_pitch: f64,
    reference: [f64; 3],
}

impl ArrayLayout {
    /// Regular layout: each strip runs along Z with spacing `element_spacing`,
    /// strips are stacked along Y with pitch `strip_pitch`, the centroid sits
    /// at the origin and the aperture lies in the plane X = 0. Element `l` of a
    /// strip is `(l + 1) * element_spacing` from the strip's output port.
    pub fn uniform(
        n_strips: usize,
        per_strip: usize,
        element_spacing: f64,
        strip_pitch: f64,
    ) -> Result<Self> {
        if n_strips == 0 || per_strip == 0 {
            return Err(Error::Config(
                "layout needs at least one strip and one element".into(),
            ));
        }
        if !(element_spacing > 0.0 && element_spacing.is_finite()) {
            return Err(Error::Config(format!(
                "element spacing must be positive, got {element_spacing}"
            )));
        }
        if !(strip_pitch > 0.0 && strip_pitch.is_finite()) {
            return Err(Error::Config(format!(
                "strip pitch must be positive, got {strip_pitch}"
            )));
        }
        let y0 = (n_strips as f64 - 1.0) / 2.0;
        let z0 = (per_strip as f64 - 1.0) / 2.0;
        let mut positions = Vec::with_capacity(n_strips * per_strip);
        let mut feed_distances = Vec::with_capacity(n_strips * per_strip);
        for i in 0..n_strips {
            for l in 0..per_strip {
                positions.push([
                    0.0,
                    (i as f64 - y0) * strip_pitch,
                    (l as f64 - z0) * element_spacing,
                ]);
                feed_distances.push((l + 1) as f64 * element_spacing);
            }
        }
        Ok(ArrayLayout {
            n_strips,
            per_strip,
            positions,
            feed_distances,
            element_spacing,
            strip_pitch,
            reference: [0.0; 3],
        })
    }

    /// Arbitrary layout. Positions and feed distances are strip-major.
    pub fn from_parts(
        n_strips: usize,
        per_strip: usize,
        positions: Vec<[f64; 3]>,
        feed_distances: Vec<f64>,
        reference: [f64; 3],
    ) -> Result<Self> {
        let n = n_strips * per_strip;
        if n == 0 {
            return Err(Error::Config(
                "layout needs at least one strip and one element".into(),
            ));
        }
        if positions.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: positions.len(),
            });
        }
        if feed_distances.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: feed_distances.len(),
            });
        }
        for strip in feed_distances.chunks(per_strip) {
            if strip.iter().any(|&r| !(r >= 0.0)) {
                return Err(Error::Config("feed distances must be non-negative".into()));
            }
            if strip.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(
                    "feed distances must increase along each strip".into(),
                ));
            }
        }
        let spacing = if per_strip > 1 {
            dist3(positions[0], positions[1])
        } else {
            0.0
        };
        let pitch = if n_strips > 1 {
            dist3(positions[0], positions[per_strip])
        } else {
            0.0
        };
        let layout = ArrayLayout {
            n_strips,
            per_strip,
            positions,
            feed_distances,
            element_spacing: spacing,
            strip_pitch: pitch,
            reference,
        };
        layout.check_strip_geometry()?;
        Ok(layout)
    }

    fn check_strip_geometry(&self) -> Result<()> {
        let scale = self
            .positions
            .iter()
            .map(|p| norm3(sub3(*p, self.reference)))
            .fold(1e-3, f64::max);
        let tol = 1e-9 * scale;
        let mut axis: Option<[f64; 3]> = None;
        for strip in self.positions.chunks(self.per_strip) {
            if strip.len() < 2 {
                continue;
            }
            let dir = sub3(strip[strip.len() - 1], strip[0]);
            let len = norm3(dir);
            if len <= tol {
                return Err(Error::Config("strip elements must not coincide".into()));
            }
            let unit = scale3(dir, 1.0 / len);
            for p in strip {
                let off = sub3(*p, strip[0]);
                if norm3(cross3(off, unit)) > tol {
                    return Err(Error::Config(
                        "elements of a strip must be collinear".into(),
                    ));
                }
            }
            match axis {
                None => axis = Some(unit),
                Some(a) if norm3(cross3(a, unit)) > 1e-9 => {
                    return Err(Error::Config("strips must be parallel".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn n_strips(&self) -> usize {
        self.n_strips
    }

    pub fn per_strip(&self) -> usize {
        self.per_strip
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn element_spacing(&self) -> f64 {
        self.element_spacing
    }

    pub fn strip_pitch(&self) -> f64 {
        self.strip_pitch
    }

    pub fn reference(&self) -> [f64; 3] {
        self.reference
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn feed_distances(&self) -> &[f64] {
        &self.feed_distances
    }

    pub fn index(&self, strip: usize, element: usize) -> Result<usize> {
        if strip >= self.n_strips || element >= self.per_strip {
            return Err(Error::Index {
                strip,
                element,
                n_strips: self.n_strips,
                per_strip: self.per_strip,
            });
        }
        Ok(strip * self.per_strip + element)
    }

    pub fn position(&self, strip: usize, element: usize) -> Result<[f64; 3]> {
        Ok(self.positions[self.index(strip, element)?])
    }

    /// Polar description `(r, unit direction)` of an element relative to the
    /// reference point. The direction is zero for an element at the reference.
    pub fn element_polar(&self, strip: usize, element: usize) -> Result<(f64, [f64; 3])> {
        let rel = sub3(self.position(strip, element)?, self.reference);
        let r = norm3(rel);
        let dir = if r > 0.0 {
            scale3(rel, 1.0 / r)
        } else {
            [0.0; 3]
        };
        Ok((r, dir))
    }

    /// Distance from element `(strip, element)` to the source, via the
    /// triangle formed with the reference point:
    /// `sqrt(r^2 + d^2 - 2 r d cos(gamma))`.
    pub fn element_source_distance(
        &self,
        strip: usize,
        element: usize,
        src: PolarPosition,
    ) -> Result<f64> {
        let n = self.index(strip, element)?;
        Ok(src.d + self.path_offset(n, src))
    }

    /// `d_n - d` for flat element `n`, computed without cancellation.
    #[inline]
    fn path_offset(&self, n: usize, src: PolarPosition) -> f64 {
        let (s, c) = src.theta.sin_cos();
        let rel = sub3(self.positions[n], self.reference);
        offset_from(rel, src.d, c, s)
    }

    /// Fills `out[n] = d_n(src) - src.d` for every element.
    pub fn path_offsets(&self, src: PolarPosition, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        let (s, c) = src.theta.sin_cos();
        for (o, p) in out.iter_mut().zip(&self.positions) {
            *o = offset_from(sub3(*p, self.reference), src.d, c, s);
        }
    }

    /// `2 D^2 / lambda` with `D` the largest distance between two elements.
    pub fn fraunhofer_distance(&self, carrier_hz: f64) -> f64 {
        let mut max_sq = 0.0f64;
        for (a, pa) in self.positions.iter().enumerate() {
            for pb in &self.positions[a + 1..] {
                let d = sub3(*pa, *pb);
                max_sq = max_sq.max(dot3(d, d));
            }
        }
        2.0 * max_sq / wavelength(carrier_hz)
    }

    /// Rotate the layout (and its reference) about the Z axis.
    pub fn rotated_z(&self, angle: f64) -> ArrayLayout {
        let (s, c) = angle.sin_cos();
        let rot = |p: [f64; 3]| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        ArrayLayout {
            positions: self.positions.iter().map(|&p| rot(p)).collect(),
            reference: rot(self.reference),
            ..self.clone()
        }
    }
}

#[inline]
fn offset_from(rel: [f64; 3], d: f64, cos_t: f64, sin_t: f64) -> f64 {
    let r_sq = dot3(rel, rel);
    // r cos(gamma) = rel . u, with u the unit vector towards the source
    let r_cos = rel[0] * cos_t + rel[1] * sin_t;
    let num = r_sq - 2.0 * d * r_cos;
    let dist = (d * d + num).max(0.0).sqrt();
    num / (dist + d)
}

#[inline]
fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
fn scale3(a: [f64; 3], k: f64) -> [f64; 3] {
    [a[0] * k, a[1] * k, a[2] * k]
}

#[inline]
fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3(sub3(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const F28: f64 = 28e9;

    fn single(pos: [f64; 3]) -> ArrayLayout {
        ArrayLayout::from_parts(1, 1, vec![pos], vec![0.0], [0.0; 3]).unwrap()
    }

    #[test]
    fn reference_element_sees_range() {
        let layout = single([0.0; 3]);
        let src = PolarPosition::new(6.0, PI / 3.0).unwrap();
        assert_eq!(layout.element_source_distance(0, 0, src).unwrap(), 6.0);
    }

    #[test]
    fn collinear_element_gives_range_difference() {
        let theta: f64 = 0.4;
        let layout = single([0.1 * theta.cos(), 0.1 * theta.sin(), 0.0]);
        let src = PolarPosition::new(6.0, theta).unwrap();
        assert_relative_eq!(
            layout.element_source_distance(0, 0, src).unwrap(),
            5.9,
            max_relative = 1e-14
        );
    }

    #[test]
    fn offset_element_matches_cartesian() {
        // frozen from the Euclidean oracle: |(0, 0.01, 0.12) - (3, 3*sqrt(3), 0)|
        let layout = single([0.0, 0.01, 0.12]);
        let src = PolarPosition::new(6.0, PI / 3.0).unwrap();
        let got = layout.element_source_distance(0, 0, src).unwrap();
        let want = oracle::euclidean_distance([0.0, 0.01, 0.12], src);
        assert_relative_eq!(got, want, max_relative = 1e-13);
        assert_relative_eq!(got, 5.992543445945625, max_relative = 1e-12);
    }

    #[test]
    fn bad_index_is_reported() {
        let layout = ArrayLayout::uniform(2, 3, 0.01, 0.01).unwrap();
        let src = PolarPosition::new(1.0, 0.0).unwrap();
        assert!(matches!(
            layout.element_source_distance(2, 0, src),
            Err(Error::Index { strip: 2, .. })
        ));
        assert!(layout.element_source_distance(0, 3, src).is_err());
    }

    #[test]
    fn phase_delay_values() {
        let lambda = wavelength(F28);
        assert_relative_eq!(phase_delay(lambda, F28), 2.0 * PI, max_relative = 1e-15);
        assert_eq!(phase_delay(0.0, F28), 0.0);
        // 2*pi*28e9*6/c evaluated with exact rational arithmetic
        assert_relative_eq!(
            phase_delay(6.0, F28),
            3521.019636878825,
            max_relative = 1e-12
        );
    }

    #[test]
    fn fraunhofer_two_elements() {
        let layout = ArrayLayout::from_parts(
            1,
            2,
            vec![[0.0; 3], [0.0, 0.0, 0.1]],
            vec![0.0, 0.1],
            [0.0; 3],
        )
        .unwrap();
        let want = 2.0 * 0.01 / (SPEED_OF_LIGHT / F28);
        assert_relative_eq!(layout.fraunhofer_distance(F28), want, max_relative = 1e-14);
        assert_relative_eq!(want, 1.868, max_relative = 1e-3);
        assert_eq!(single([0.0; 3]).fraunhofer_distance(F28), 0.0);
    }

    #[test]
    fn uniform_layout_shape() {
        let layout = ArrayLayout::uniform(5, 48, 0.005, 0.005).unwrap();
        assert_eq!(layout.len(), 240);
        let centroid = layout.positions().iter().fold([0.0; 3], |acc, p| {
            [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]
        });
        assert!(centroid.iter().all(|c| c.abs() < 1e-12));
        let feed = &layout.feed_distances()[..48];
        assert_eq!(feed[0], 0.005);
        assert!(feed.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bent_strip() {
        let err = ArrayLayout::from_parts(
            1,
            3,
            vec![[0.0; 3], [0.0, 0.0, 0.1], [0.0, 0.05, 0.2]],
            vec![0.1, 0.2, 0.3],
            [0.0; 3],
        );
        assert!(err.is_err());
        let err = ArrayLayout::from_parts(
            1,
            2,
            vec![[0.0; 3], [0.0, 0.0, 0.1]],
            vec![0.2, 0.1],
            [0.0; 3],
        );
        assert!(err.is_err());
    }

    #[test]
    fn polar_normalization() {
        let p = PolarPosition::new(2.0, 3.0 * PI).unwrap();
        assert!((p.theta + PI).abs() < 1e-12);
        assert!(PolarPosition::new(0.0, 0.0).is_err());
        assert!(PolarPosition::new(-1.0, 0.0).is_err());
        assert_eq!(wrap_phase(-1e-300), 0.0);
    }

    proptest! {
        #[test]
        fn polar_form_equals_euclidean(
            nd in 1usize..4, ne in 1usize..6,
            spacing in 0.001f64..0.05, pitch in 0.001f64..0.05,
            d in 0.5f64..50.0, theta in -1.5f64..1.5,
        ) {
            let layout = ArrayLayout::uniform(nd, ne, spacing, pitch).unwrap();
            let src = PolarPosition::new(d, theta).unwrap();
            for i in 0..nd {
                for l in 0..ne {
                    let got = layout.element_source_distance(i, l, src).unwrap();
                    let want = oracle::euclidean_distance(layout.position(i, l).unwrap(), src);
                    prop_assert!(((got - want) / want).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn distance_invariant_under_rotation(
            angle in -PI..PI, d in 0.5f64..30.0, theta in -1.5f64..1.5,
        ) {
            let layout = ArrayLayout::uniform(3, 4, 0.01, 0.02).unwrap();
            let rotated = layout.rotated_z(angle);
            let src = PolarPosition::new(d, theta).unwrap();
            let src_rot = PolarPosition::new(d, theta + angle).unwrap();
            for i in 0..3 {
                for l in 0..4 {
                    let a = layout.element_source_distance(i, l, src).unwrap();
                    let b = rotated.element_source_distance(i, l, src_rot).unwrap();
                    prop_assert!(((a - b) / a).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn far_field_limit_is_planar() {
        // phase offsets relative to the reference approach -k (e . u)
        let layout = ArrayLayout::uniform(3, 8, 0.005, 0.005).unwrap();
        let aperture = 0.04;
        let k = wavenumber(F28);
        let theta: f64 = 0.7;
        let planar: Vec<f64> = layout
            .positions()
            .iter()
            .map(|p| -k * (p[0] * theta.cos() + p[1] * theta.sin()))
            .collect();
        let mut prev = f64::INFINITY;
        for scale in [1e2, 1e4, 1e6] {
            let src = PolarPosition::new(scale * aperture, theta).unwrap();
            let mut off = vec![0.0; layout.len()];
            layout.path_offsets(src, &mut off);
            let err = off
                .iter()
                .zip(&planar)
                .map(|(o, p)| (k * o - p).abs())
                .fold(0.0, f64::max);
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-4);
    }
}
