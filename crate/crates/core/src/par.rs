//! Convex piecewise-affine regularization.
//!
//! For breakpoints `0 = q_0 < q_1 < … < q_m` and slopes
//! `0 <= a_0 < a_1 < … < a_{m-1}` the regularizer is
//!
//! ```text
//! Psi(w) = max_k { a_k (|w| - q_k) + b_k },   b_0 = 0,
//! b_k = b_{k-1} + a_{k-1} (q_k - q_{k-1}),
//! ```
//!
//! with an implicit infinite slope `a_m` past `q_m`, so `Psi = +inf` for
//! `|w| > q_m`. The infinite slope is never stored; it appears only as the
//! clipping branch of the proximal map and as the open end of the
//! subdifferential at `±q_m`.
//!
//! λ placement: [`ParRegularizer`] stores λ, while [`ParRegularizer::prox`]
//! takes a single combined `scale` that already includes λ. Optimizers call
//! [`ParRegularizer::prox_step`], the one place where a step size is
//! multiplied by λ.

use crate::error::{check_len, Error, Result};
use crate::quantgrid::QuantGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ParRegularizer {
    q: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    lambda: f64,
}

/// Closed interval `[lo, hi]` of subgradients; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SubgradientInterval {
    pub fn singleton(g: f64) -> Self {
        Self { lo: g, hi: g }
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, g: f64, tol: f64) -> bool {
        g >= self.lo - tol && g <= self.hi + tol
    }

    fn negated(self) -> Self {
        Self {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl ParRegularizer {
    /// Builds a regularizer from breakpoints `q` (starting at 0) and finite slopes `a`.
    /// The offsets `b` are derived from the recurrence.
    pub fn new(q: Vec<f64>, a: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularization strength must be positive and finite, got {lambda}"
            )));
        }
        if q.len() < 2 || q[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "breakpoints must start at 0 and contain at least one positive value".into(),
            ));
        }
        if q.iter().any(|v| !v.is_finite()) || q.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidArgument(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        if a.len() != q.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} finite slopes for {} breakpoints, got {}",
                q.len() - 1,
                q.len(),
                a.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) || !(a[0] >= 0.0) || a.windows(2).any(|p| p[0] >= p[1])
        {
            return Err(Error::InvalidArgument(
                "slopes must be finite, nonnegative and strictly increasing".into(),
            ));
        }
        let mut b = Vec::with_capacity(q.len());
        b.push(0.0);
        for k in 1..q.len() {
            b.push(b[k - 1] + a[k - 1] * (q[k] - q[k - 1]));
        }
        Ok(Self { q, a, b, lambda })
    }

    /// Regularizer whose asymptotic aggregate prox is hard quantization onto
    /// `grid`: `λ a_k = (q_k + q_{k+1}) / 2`. A grid without zero gets `a_0 = 0`,
    /// which removes zero as a reflection point.
    pub fn from_grid(grid: &QuantGrid, lambda: f64) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidArgument(
                "PAR needs a grid with at least two values".into(),
            ));
        }
        if !grid.is_symmetric() {
            return Err(Error::InvalidArgument("PAR needs a symmetric grid".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularization strength must be positive and finite, got {lambda}"
            )));
        }
        let mut q = vec![0.0];
        q.extend(grid.positive_values());
        let mut a: Vec<f64> = q.windows(2).map(|p| 0.5 * (p[0] + p[1]) / lambda).collect();
        if !grid.contains_zero() {
            a[0] = 0.0;
        }
        Self::new(q, a, lambda)
    }

    /// Breakpoints `[q_0 = 0, q_1, …, q_m]`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.q
    }

    /// Finite slopes `[a_0, …, a_{m-1}]`.
    pub fn slopes(&self) -> &[f64] {
        &self.a
    }

    /// Offsets `[b_0, …, b_m]`.
    pub fn offsets(&self) -> &[f64] {
        &self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of positive breakpoints `m`.
    pub fn pieces(&self) -> usize {
        self.a.len()
    }

    pub fn q_max(&self) -> f64 {
        self.q[self.q.len() - 1]
    }

    /// Largest finite slope, the Lipschitz constant of `Psi` on `[-q_m, q_m]`.
    pub fn max_slope(&self) -> f64 {
        self.a[self.a.len() - 1]
    }

    /// The symmetric grid `{0 (if a_0 > 0), ±q_1, …, ±q_m}` of reflection points.
    pub fn grid(&self) -> QuantGrid {
        QuantGrid::symmetric(&self.q[1..], self.a[0] > 0.0)
            .expect("breakpoints are positive and increasing")
    }

    /// `Psi(x)` without λ; `+inf` beyond `q_m`.
    pub fn psi(&self, x: f64) -> f64 {
        let x = x.abs();
        if x > self.q_max() {
            return f64::INFINITY;
        }
        self.a
            .iter()
            .zip(&self.q)
            .zip(&self.b)
            .map(|((a, q), b)| a * (x - q) + b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `λ Σ_i Psi(w_i)`.
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.lambda * w.iter().map(|x| self.psi(*x)).sum::<f64>()
    }

    /// Exact subdifferential of `λ Psi` at a scalar point.
    pub fn subdifferential(&self, w: f64) -> Result<SubgradientInterval> {
        let x = w.abs();
        if !(x <= self.q_max()) {
            return Err(Error::Domain(format!(
                "{w} lies outside [-{q}, {q}]",
                q = self.q_max()
            )));
        }
        let lam = self.lambda;
        let m = self.pieces();
        let positive = if x == 0.0 {
            return Ok(SubgradientInterval {
                lo: -lam * self.a[0],
                hi: lam * self.a[0],
            });
        } else {
            // first breakpoint >= x; x > 0 so k >= 1
            let k = self.q.partition_point(|q| *q < x);
            if self.q[k] == x {
                if k == m {
                    SubgradientInterval {
                        lo: lam * self.a[m - 1],
                        hi: f64::INFINITY,
                    }
                } else {
                    SubgradientInterval {
                        lo: lam * self.a[k - 1],
                        hi: lam * self.a[k],
                    }
                }
            } else {
                SubgradientInterval::singleton(lam * self.a[k - 1])
            }
        };
        Ok(if w < 0.0 {
            positive.negated()
        } else {
            positive
        })
    }

    /// Per-coordinate test of `0 ∈ grad_i + λ ∂Psi(w_i)`, with the interval
    /// widened by `tol` on both ends.
    pub fn check_stationarity(&self, w: &[f64], grad: &[f64], tol: f64) -> Result<Vec<bool>> {
        check_len(w.len(), grad.len())?;
        w.iter()
            .zip(grad)
            .map(|(wi, gi)| Ok(self.subdifferential(*wi)?.contains(-gi, tol)))
            .collect()
    }

    /// Scalar proximal map of `scale · Psi` (λ not applied here).
    pub fn prox_scalar(&self, scale: f64, u: f64) -> f64 {
        let x = u.abs();
        let mut prev_slope = 0.0;
        for (k, a) in self.a.iter().enumerate() {
            let sa = scale * a;
            debug_assert!(sa >= prev_slope);
            if x <= sa + self.q[k] {
                return self.q[k].copysign(u);
            }
            if x <= sa + self.q[k + 1] {
                return (x - sa).copysign(u);
            }
            prev_slope = sa;
        }
        self.q_max().copysign(u)
    }

    /// Element-wise `argmin_w { scale·Psi(w) + ½(w − u)² }`. The caller folds λ
    /// into `scale`.
    pub fn prox(&self, scale: f64, u: &[f64]) -> Vec<f64> {
        assert!(scale >= 0.0, "prox scale must be nonnegative, got {scale}");
        u.iter().map(|x| self.prox_scalar(scale, *x)).collect()
    }

    /// Proximal map of `step · λ · Psi`.
    pub fn prox_step(&self, step: f64, u: &[f64]) -> Vec<f64> {
        self.prox(step * self.lambda, u)
    }

    /// Limit of `prox_step(γ, γ x)` as `γ → ∞`: hard thresholding with jumps at `λ a_k`.
    /// Exact thresholds resolve to the larger magnitude.
    pub fn asymptotic_map(&self, x: f64) -> f64 {
        let k = self
            .a
            .iter()
            .take_while(|a| self.lambda * *a <= x.abs())
            .count();
        self.q[k].copysign(x)
    }
}

/// PARQ soft quantization map with slanted-segment slope `slope >= 1`.
///
/// Each gap `[v_j, v_{j+1}]` of the grid carries a slanted segment of slope
/// `slope` centered at the midpoint, mapping an input interval of half-width
/// `(v_{j+1} − v_j) / (2·slope)` onto the gap; inputs elsewhere go flat to the
/// nearest grid value and inputs beyond the extremes clip. `slope = 1` is the
/// clipped identity and `slope = +inf` is hard quantization.
pub fn prox_parq(u: &[f64], grid: &QuantGrid, slope: f64) -> Result<Vec<f64>> {
    if !(slope >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "PARQ slope must be at least 1, got {slope}"
        )));
    }
    Ok(u.iter().map(|x| parq_scalar(*x, grid, slope)).collect())
}

fn parq_scalar(x: f64, grid: &QuantGrid, slope: f64) -> f64 {
    if slope == f64::INFINITY {
        return grid.nearest(x);
    }
    if slope == 1.0 {
        return x.clamp(grid.min(), grid.max());
    }
    let Some(j) = grid.bracket(x) else {
        return x.clamp(grid.min(), grid.max());
    };
    let v = grid.values();
    let (lo, hi) = (v[j], v[j + 1]);
    if x == lo {
        return lo;
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo) / slope;
    if x <= mid - half {
        lo
    } else if x >= mid + half {
        hi
    } else {
        (mid + slope * (x - mid)).clamp(lo, hi)
    }
}

/// BinaryRelax map `u + relax/(1 + relax) · (Q(u) − u)`, the convex combination
/// `(relax·Q(u) + u)/(relax + 1)`. Slanted slope is `1/(1 + relax)`;
/// `relax = 0` is the identity and `relax = +inf` is hard quantization.
pub fn prox_binaryrelax(u: &[f64], grid: &QuantGrid, relax: f64) -> Result<Vec<f64>> {
    if !(relax >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "BinaryRelax weight must be nonnegative, got {relax}"
        )));
    }
    let weight = if relax == f64::INFINITY {
        1.0
    } else {
        relax / (1.0 + relax)
    };
    Ok(u.iter()
        .map(|x| {
            let q = grid.nearest(*x);
            if weight == 1.0 {
                q
            } else {
                x + weight * (q - x)
            }
        })
        .collect())
}

/// Element-wise maps used as the backward step of the quantizing optimizers.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxOperator {
    /// PAR prox, scaled by the step passed to [`ProxOperator::apply`] times λ.
    Par(ParRegularizer),
    /// Hard quantization, the prox of the grid indicator; step-invariant.
    Hard(QuantGrid),
    Parq {
        grid: QuantGrid,
        slope: f64,
    },
    BinaryRelax {
        grid: QuantGrid,
        relax: f64,
    },
}

impl ProxOperator {
    pub fn apply(&self, step: f64, u: &[f64]) -> Result<Vec<f64>> {
        match self {
            ProxOperator::Par(reg) => Ok(reg.prox_step(step, u)),
            ProxOperator::Hard(grid) => Ok(crate::quantgrid::hard_quantize(u, grid)),
            ProxOperator::Parq { grid, slope } => prox_parq(u, grid, *slope),
            ProxOperator::BinaryRelax { grid, relax } => prox_binaryrelax(u, grid, *relax),
        }
    }

    /// `λ Σ Psi(w)` for PAR, the indicator value for hard quantization, and 0
    /// for the soft maps, which have no convex regularizer.
    pub fn penalty(&self, w: &[f64]) -> f64 {
        match self {
            ProxOperator::Par(reg) => reg.eval(w),
            ProxOperator::Hard(grid) => {
                if w.iter().all(|x| grid.values().contains(x)) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            _ => 0.0,
        }
    }
}
