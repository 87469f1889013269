//! RMSE and paired bootstrap intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Population coefficient of variation.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    var.sqrt() / m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Percentile bootstrap interval for `RMSE(a) - scale * RMSE(b)` where
/// `a[t]` and `b[t]` come from the same trial. Trials are resampled jointly.
pub fn paired_rmse_difference(
    a: &[f64],
    b: &[f64],
    scale: f64,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Interval {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    assert!(!a.is_empty() && resamples > 0 && level > 0.0 && level < 1.0);
    let n = a.len();
    let sq_a: Vec<f64> = a.iter().map(|e| e * e).collect();
    let sq_b: Vec<f64> = b.iter().map(|e| e * e).collect();
    let mut rng = seed::rng(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let (mut sa, mut sb) = (0.0, 0.0);
            for _ in 0..n {
                let t = rng.random_range(0..n);
                sa += sq_a[t];
                sb += sq_b[t];
            }
            (sa / n as f64).sqrt() - scale * (sb / n as f64).sqrt()
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| stats[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Interval {
        estimate: rmse(a) - scale * rmse(b),
        lo: pick(tail),
        hi: pick(1.0 - tail),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_statistics() {
        assert_eq!(rmse(&[3.0, 4.0]), (12.5f64).sqrt());
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(rmse(&[]).is_nan());
        assert!((coefficient_of_variation(&[1.0, 1.0, 1.0])).abs() < 1e-15);
        assert!((coefficient_of_variation(&[1.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_separates_clear_differences() {
        let a: Vec<f64> = (0..100).map(|i| 2.0 + 0.01 * i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x * 0.5).collect();
        let iv = paired_rmse_difference(&a, &b, 1.0, 1000, 0.95, 1);
        assert!(iv.lo > 0.0 && iv.lo <= iv.estimate && iv.estimate <= iv.hi);
        let same = paired_rmse_difference(&a, &a, 1.0, 500, 0.95, 2);
        assert_eq!((same.lo, same.hi), (0.0, 0.0));
        let scaled = paired_rmse_difference(&a, &b, 2.0, 500, 0.95, 3);
        assert!(scaled.contains(0.0));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 1.0, 2.0, 1.0];
        assert_eq!(
            paired_rmse_difference(&a, &b, 1.0, 200, 0.95, 9),
            paired_rmse_difference(&a, &b, 1.0, 200, 0.95, 9)
        );
    }
}
