//! Empirical distribution helpers shared by every component that needs a
//! quantile: the barycenter transport, the Lipschitz percentile and the ITE
//! median all go through [`Ecdf`] so that their numbers agree.
//!
//! Convention: the order statistic `x_(k)` sits at probability `k / (m + 1)`;
//! tied values sit at their average rank. The CDF is the piecewise-linear
//! curve through those points (clamped outside the sample range) and the
//! quantile function is its inverse, i.e. linear interpolation between
//! order statistics at position `p (m + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const GRID_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return domain("empirical distribution needs at least one value");
        }
        if sample.iter().any(|v| v.is_nan()) {
            return domain("empirical distribution sample contains NaN");
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Average 1-based rank of the run of values equal to `sorted[idx]`.
    fn average_rank_at(&self, idx: usize) -> f64 {
        let v = self.sorted[idx];
        let lo = self.sorted.partition_point(|x| *x < v);
        let hi = self.sorted.partition_point(|x| *x <= v);
        (lo + 1 + hi) as f64 / 2.0
    }

    pub fn cdf(&self, s: f64) -> f64 {
        let m = self.sorted.len();
        let denom = (m + 1) as f64;
        let first = self.sorted[0];
        let last = self.sorted[m - 1];
        if s <= first {
            return self.average_rank_at(0) / denom;
        }
        if s >= last {
            return self.average_rank_at(m - 1) / denom;
        }
        // first index with value > s; the previous distinct value is <= s
        let hi = self.sorted.partition_point(|x| *x <= s);
        let lo = hi - 1;
        let (v_lo, v_hi) = (self.sorted[lo], self.sorted[hi]);
        let r_lo = self.average_rank_at(lo);
        if v_lo == s {
            return r_lo / denom;
        }
        let r_hi = self.average_rank_at(hi);
        let t = (s - v_lo) / (v_hi - v_lo);
        (r_lo + t * (r_hi - r_lo)) / denom
    }

    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&self.sorted, p)
    }
}

/// Quantile of an already sorted slice under the shared convention.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    assert!(m > 0, "quantile of empty sample");
    let mut h = p * (m + 1) as f64;
    let nearest = h.round();
    if (h - nearest).abs() < GRID_SNAP {
        h = nearest;
    }
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= m as f64 {
        return sorted[m - 1];
    }
    let k = h.floor() as usize;
    let frac = h - k as f64;
    let (a, b) = (sorted[k - 1], sorted[k]);
    if frac == 0.0 || a == b {
        return a;
    }
    if a.is_infinite() || b.is_infinite() {
        return f64::INFINITY;
    }
    a + frac * (b - a)
}

/// Quantile of an unsorted sample (NaNs rejected).
pub fn quantile(sample: &[f64], p: f64) -> Result<f64> {
    Ok(Ecdf::new(sample)?.quantile(p))
}

/// Weighted median: smallest value whose cumulative weight reaches half the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return domain("weighted median needs equally sized, non-empty inputs");
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return domain("weighted median needs positive total weight");
    }
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        if acc >= 0.5 * total {
            return Ok(values[i]);
        }
    }
    Ok(values[idx[idx.len() - 1]])
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_map_to_order_statistics() {
        let e = Ecdf::new(&[30.0, 40.0]).unwrap();
        assert!((e.quantile(1.0 / 3.0) - 30.0).abs() < 1e-12);
        assert!((e.quantile(2.0 / 3.0) - 40.0).abs() < 1e-12);
        assert!((e.quantile(0.5) - 35.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_then_quantile_is_identity_on_sample() {
        let sample = [3.0, 1.0, 2.0, 2.0, 7.5, 2.0, 9.0];
        let e = Ecdf::new(&sample).unwrap();
        for &s in &sample {
            assert!((e.quantile(e.cdf(s)) - s).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn median_and_singletons() {
        assert_eq!(quantile(&[-1.0, 0.0, 1.0], 0.5).unwrap(), 0.0);
        assert_eq!(quantile(&[2.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[20.0], 0.95).unwrap(), 20.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.5);
    }

    #[test]
    fn infinite_tail_propagates() {
        let q = quantile(&[1.0, 2.0, f64::INFINITY], 0.95).unwrap();
        assert!(q.is_infinite());
        let q = quantile(&[1.0, 2.0, 3.0, f64::INFINITY], 0.5).unwrap();
        assert_eq!(q, 2.5);
    }

    #[test]
    fn ks_of_identical_samples_is_zero() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn weighted_median_picks_heavy_value() {
        let m = weighted_median(&[1.0, 5.0, 9.0], &[1.0, 10.0, 1.0]).unwrap();
        assert_eq!(m, 5.0);
    }
}
