//! Finite quantization target sets and the hard quantization map.
//!
//! A [`QuantGrid`] stores the full signed list of target values in strictly
//! increasing order. Hard quantization sends every coordinate to its nearest
//! grid value; exact ties at a midpoint go to the value of larger magnitude,
//! which keeps the map odd on symmetric grids.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuantGrid {
    values: Vec<f64>,
    symmetric: bool,
}

impl QuantGrid {
    /// Builds a grid from strictly increasing finite values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("quantization grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid value {v} is not finite"
            )));
        }
        if values.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidArgument(
                "grid values must be strictly increasing".into(),
            ));
        }
        let symmetric = values
            .iter()
            .zip(values.iter().rev())
            .all(|(lo, hi)| *lo == -*hi);
        Ok(Self { values, symmetric })
    }

    /// Sorts and deduplicates arbitrary finite values before building the grid.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("grid value is NaN".into()));
        }
        // normalizes -0.0 to 0.0
        values.iter_mut().for_each(|v| *v += 0.0);
        values.sort_by(f64::total_cmp);
        values.dedup();
        Self::new(values)
    }

    /// Builds the symmetric grid `{±q_1, …, ±q_m}`, with zero added when requested.
    pub fn symmetric(magnitudes: &[f64], include_zero: bool) -> Result<Self> {
        if magnitudes.iter().any(|q| !(*q > 0.0)) {
            return Err(Error::InvalidArgument(
                "symmetric grid magnitudes must be positive".into(),
            ));
        }
        let mut values: Vec<f64> = magnitudes.iter().flat_map(|q| [-q, *q]).collect();
        if include_zero {
            values.push(0.0);
        }
        Self::from_unsorted(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn contains_zero(&self) -> bool {
        self.values.contains(&0.0)
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Largest magnitude in the grid.
    pub fn max_abs(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    /// Positive grid values in increasing order (`q_1 < … < q_m`).
    pub fn positive_values(&self) -> Vec<f64> {
        self.values.iter().copied().filter(|v| *v > 0.0).collect()
    }

    /// Midpoints between adjacent grid values.
    pub fn thresholds(&self) -> Vec<f64> {
        self.values
            .windows(2)
            .map(|p| 0.5 * (p[0] + p[1]))
            .collect()
    }

    /// Index `j` such that `values[j] <= x < values[j + 1]`, or `None` when `x`
    /// lies outside `[min, max)`.
    pub(crate) fn bracket(&self, x: f64) -> Option<usize> {
        let upper = self.values.partition_point(|v| *v <= x);
        if upper == 0 || upper == self.values.len() {
            None
        } else {
            Some(upper - 1)
        }
    }

    /// Nearest grid value to `x`.
    pub fn nearest(&self, x: f64) -> f64 {
        if x <= self.min() {
            return self.min();
        }
        if x >= self.max() {
            return self.max();
        }
        let upper = self.values.partition_point(|v| *v < x);
        let lo = self.values[upper - 1];
        let hi = self.values[upper];
        let d_lo = x - lo;
        let d_hi = hi - x;
        if d_lo < d_hi {
            lo
        } else if d_hi < d_lo {
            hi
        } else if lo.abs() > hi.abs() {
            lo
        } else if hi.abs() > lo.abs() {
            hi
        } else if x.is_sign_negative() {
            // symmetric pair around zero and x is ±0: follow the sign bit
            lo
        } else {
            hi
        }
    }
}

/// Element-wise projection onto the grid.
pub fn hard_quantize(u: &[f64], grid: &QuantGrid) -> Vec<f64> {
    u.iter().map(|x| grid.nearest(*x)).collect()
}

/// Fraction of elements lying within `tol` of some grid value.
///
/// An empty vector is vacuously fully quantized.
pub fn quantized_fraction(w: &[f64], grid: &QuantGrid, tol: f64) -> f64 {
    if w.is_empty() {
        return 1.0;
    }
    let hits = w
        .iter()
        .filter(|x| (grid.nearest(**x) - **x).abs() <= tol)
        .count();
    hits as f64 / w.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(v: &[f64]) -> QuantGrid {
        QuantGrid::from_unsorted(v.to_vec()).unwrap()
    }

    #[test]
    fn nearest_of_two_values() {
        assert_eq!(hard_quantize(&[0.2], &g(&[-1.0, 1.0])), vec![1.0]);
    }

    #[test]
    fn nearest_with_zero() {
        assert_eq!(hard_quantize(&[0.3], &g(&[0.0, 0.5, -0.5])), vec![0.5]);
    }

    #[test]
    fn midpoint_tie_goes_away_from_zero() {
        let grid = g(&[0.0, 0.5, -0.5]);
        assert_eq!(hard_quantize(&[0.25, -0.25], &grid), vec![0.5, -0.5]);
    }

    #[test]
    fn zero_on_binary_grid_follows_sign_bit() {
        let grid = g(&[-1.0, 1.0]);
        assert_eq!(hard_quantize(&[0.0, -0.0], &grid), vec![1.0, -1.0]);
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(matches!(
            QuantGrid::new(vec![]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(QuantGrid::new(vec![1.0, 1.0]).is_err());
        assert!(QuantGrid::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn symmetric_flag() {
        assert!(g(&[-2.0, 0.0, 2.0]).is_symmetric());
        assert!(!g(&[-2.0, 0.0, 1.0]).is_symmetric());
        assert!(g(&[0.0]).is_symmetric());
    }

    #[test]
    fn fractions() {
        let pm1 = g(&[-1.0, 1.0]);
        assert_eq!(quantized_fraction(&[1.0, -1.0], &pm1, 0.0), 1.0);
        assert_eq!(quantized_fraction(&[0.5, 1.0], &pm1, 0.0), 0.5);
        assert_eq!(quantized_fraction(&[0.999], &pm1, 1e-2), 1.0);
    }

    #[test]
    fn thresholds_are_midpoints() {
        assert_eq!(g(&[-1.0, 0.0, 3.0]).thresholds(), vec![-0.5, 1.5]);
    }

    fn grid_strategy() -> impl Strategy<Value = QuantGrid> {
        (prop::collection::vec(0.01f64..4.0, 1..5), any::<bool>())
            .prop_filter_map("degenerate", |(m, z)| QuantGrid::symmetric(&m, z).ok())
    }

    proptest! {
        #[test]
        fn idempotent(grid in grid_strategy(), u in prop::collection::vec(-6.0f64..6.0, 1..20)) {
            let once = hard_quantize(&u, &grid);
            prop_assert_eq!(hard_quantize(&once, &grid), once);
        }

        #[test]
        fn odd_and_monotone(grid in grid_strategy(), mut u in prop::collection::vec(-6.0f64..6.0, 2..30)) {
            let neg: Vec<f64> = u.iter().map(|x| -x).collect();
            let q = hard_quantize(&u, &grid);
            let qn = hard_quantize(&neg, &grid);
            for (a, b) in q.iter().zip(&qn) {
                prop_assert_eq!(*a, -*b);
            }
            u.sort_by(f64::total_cmp);
            let q = hard_quantize(&u, &grid);
            prop_assert!(q.windows(2).all(|p| p[0] <= p[1]));
        }

        #[test]
        fn optimal_against_exhaustive_scan(grid in grid_strategy(), x in -6.0f64..6.0) {
            let q = grid.nearest(x);
            prop_assert!(grid.values().contains(&q));
            let best = grid.values().iter().map(|v| (x - v).abs()).fold(f64::INFINITY, f64::min);
            prop_assert_eq!((x - q).abs(), best);
        }
    }
}
