//! Least-squares binary quantization.
//!
//! Approximates a vector by `w_i = Σ_j v_j s_j(u_i)` with scales
//! `v_1 >= … >= v_n >= 0` and signs `s_j ∈ {−1, 1}`. The 1-bit and ternary
//! problems have exact solutions; `n >= 2` bits use the greedy foldable
//! scheme. [`lsbq_bruteforce`] enumerates all assignments for small inputs and
//! serves as the reference for the others.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantgrid::QuantGrid;

/// Quantization width of a parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitWidth {
    /// `{0, ±q}`: two equal scales.
    Ternary,
    #[serde(untagged)]
    Bits(u32),
}

impl BitWidth {
    pub fn validate(self) -> Result<Self> {
        match self {
            BitWidth::Bits(0) => Err(Error::InvalidArgument(
                "bit width must be at least 1".into(),
            )),
            BitWidth::Bits(n) if n > 16 => Err(Error::InvalidArgument(format!(
                "bit width {n} exceeds the supported maximum of 16"
            ))),
            other => Ok(other),
        }
    }
}

/// Nonincreasing nonnegative scales `v_1 >= … >= v_n >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleVector {
    v: Vec<f64>,
}

impl ScaleVector {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidArgument(
                "scale vector needs at least one bit".into(),
            ));
        }
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument(
                "scales must be finite and nonnegative".into(),
            ));
        }
        if v.windows(2).any(|p| p[0] < p[1]) {
            return Err(Error::InvalidArgument(
                "scales must be nonincreasing".into(),
            ));
        }
        Ok(Self { v })
    }

    pub fn scales(&self) -> &[f64] {
        &self.v
    }

    pub fn bits(&self) -> usize {
        self.v.len()
    }

    /// `Σ_i (u_i − nearest grid value)²` on the grid spanned by the scales,
    /// which is the best assignment of signs for these scales.
    pub fn reconstruction_error(&self, u: &[f64]) -> f64 {
        let grid = grid_from_scales(self);
        u.iter().map(|x| (x - grid.nearest(*x)).powi(2)).sum()
    }
}

fn sgn(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn mean_abs(u: &[f64]) -> f64 {
    u.iter().map(|x| x.abs()).sum::<f64>() / u.len() as f64
}

fn non_empty(u: &[f64]) -> Result<()> {
    if u.is_empty() {
        Err(Error::InvalidArgument("LSBQ input is empty".into()))
    } else {
        Ok(())
    }
}

/// `v_1 = ‖u‖₁ / d` with signs `sgn(u_i)`.
pub fn lsbq_1bit(u: &[f64]) -> Result<ScaleVector> {
    non_empty(u)?;
    ScaleVector::new(vec![mean_abs(u)])
}

/// Optimal ternary quantization `min Σ (u_i − q s_i)²` over `q >= 0`,
/// `s_i ∈ {−1, 0, 1}`. Keeps the `k` largest magnitudes where `k` maximizes
/// `(Σ_{i<=k} |u|_(i))² / k`.
pub fn lsbq_ternary(u: &[f64]) -> Result<(f64, Vec<i8>)> {
    non_empty(u)?;
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|i, j| u[*j].abs().total_cmp(&u[*i].abs()));
    let mut prefix = 0.0;
    let (mut best_k, mut best_gain, mut best_sum) = (1, f64::NEG_INFINITY, 0.0);
    for (k, i) in order.iter().enumerate() {
        prefix += u[*i].abs();
        let gain = prefix * prefix / (k + 1) as f64;
        if gain > best_gain {
            best_gain = gain;
            best_k = k + 1;
            best_sum = prefix;
        }
    }
    let q = best_sum / best_k as f64;
    let mut s = vec![0i8; u.len()];
    if q > 0.0 {
        for i in &order[..best_k] {
            s[*i] = if u[*i] < 0.0 { -1 } else { 1 };
        }
    }
    Ok((q, s))
}

/// Greedy foldable scales and the residual norm after each step.
fn greedy_raw(u: &[f64], bits: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = u.to_vec();
    let mut v = Vec::with_capacity(bits);
    let mut norms = Vec::with_capacity(bits);
    for _ in 0..bits {
        let vj = mean_abs(&r);
        for x in r.iter_mut() {
            *x -= vj * sgn(*x);
        }
        v.push(vj);
        norms.push(r.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    (v, norms)
}

/// Greedy foldable LSBQ: `v_j = mean |r|`, `s_j = sgn(r)` (with `sgn(0) = 1`),
/// `r ← r − v_j s_j`. Scales come back sorted in nonincreasing order; the
/// spanned grid does not depend on their order.
pub fn lsbq_greedy(u: &[f64], bits: usize) -> Result<ScaleVector> {
    if bits < 1 {
        return Err(Error::InvalidArgument("LSBQ needs at least one bit".into()));
    }
    non_empty(u)?;
    let (mut v, _) = greedy_raw(u, bits);
    v.sort_by(|a, b| b.total_cmp(a));
    ScaleVector::new(v)
}

/// `‖r‖₂` after each greedy step, in step order.
pub fn greedy_residual_norms(u: &[f64], bits: usize) -> Result<Vec<f64>> {
    if bits < 1 {
        return Err(Error::InvalidArgument("LSBQ needs at least one bit".into()));
    }
    non_empty(u)?;
    Ok(greedy_raw(u, bits).1)
}

/// Squared error of the greedy foldable reconstruction itself.
pub fn greedy_error(u: &[f64], bits: usize) -> Result<f64> {
    let norms = greedy_residual_norms(u, bits)?;
    Ok(norms[norms.len() - 1].powi(2))
}

/// Dispatches on bit width: exact 1-bit, exact ternary (`v = [q/2, q/2]`),
/// greedy foldable otherwise.
pub fn lsbq(u: &[f64], bits: BitWidth) -> Result<ScaleVector> {
    match bits.validate()? {
        BitWidth::Ternary => {
            let (q, _) = lsbq_ternary(u)?;
            ScaleVector::new(vec![0.5 * q, 0.5 * q])
        }
        BitWidth::Bits(1) => lsbq_1bit(u),
        BitWidth::Bits(n) => lsbq_greedy(u, n as usize),
    }
}

/// All signed combinations `±v_1 ± … ± v_n`, sorted and deduplicated.
pub fn grid_from_scales(scales: &ScaleVector) -> QuantGrid {
    let v = scales.scales();
    let mut values = Vec::with_capacity(1 << v.len());
    for mask in 0u32..(1u32 << v.len()) {
        let mut acc = 0.0;
        for (j, vj) in v.iter().enumerate() {
            if mask & (1 << j) == 0 {
                acc += vj;
            } else {
                acc -= vj;
            }
        }
        values.push(acc);
    }
    QuantGrid::from_unsorted(values).expect("finite combinations of finite scales")
}

/// Exhaustive LSBQ over every per-element choice of sign combination, for
/// `d <= 8` and 1 bit, 2 bits or ternary. Each assignment's least-squares
/// scales are solved under the ordering constraint and the global optimum is
/// returned.
pub fn lsbq_bruteforce(u: &[f64], bits: BitWidth) -> Result<ScaleVector> {
    non_empty(u)?;
    if u.len() > 8 {
        return Err(Error::InvalidArgument(format!(
            "exhaustive LSBQ supports at most 8 elements, got {}",
            u.len()
        )));
    }
    match bits {
        BitWidth::Bits(1) => bruteforce_1bit(u),
        BitWidth::Bits(2) => bruteforce_2bit(u),
        BitWidth::Ternary => bruteforce_ternary(u),
        other => Err(Error::InvalidArgument(format!(
            "exhaustive LSBQ supports 1 bit, 2 bits or ternary, got {other:?}"
        ))),
    }
}

fn sse(u: &[f64], recon: impl Fn(usize) -> f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(i, x)| (x - recon(i)).powi(2))
        .sum()
}

fn bruteforce_1bit(u: &[f64]) -> Result<ScaleVector> {
    let d = u.len();
    let mut best = (f64::INFINITY, 0.0);
    for mask in 0u32..(1 << d) {
        let s = |i: usize| if mask & (1 << i) == 0 { 1.0 } else { -1.0 };
        let v = ((0..d).map(|i| s(i) * u[i]).sum::<f64>() / d as f64).max(0.0);
        let err = sse(u, |i| v * s(i));
        if err < best.0 {
            best = (err, v);
        }
    }
    ScaleVector::new(vec![best.1])
}

fn bruteforce_ternary(u: &[f64]) -> Result<ScaleVector> {
    let d = u.len();
    let mut best = (f64::INFINITY, 0.0);
    for mut code in 0..3usize.pow(d as u32) {
        let mut s = [0.0f64; 8];
        for si in s.iter_mut().take(d) {
            *si = (code % 3) as f64 - 1.0;
            code /= 3;
        }
        let norm: f64 = s[..d].iter().map(|x| x * x).sum();
        let q = if norm == 0.0 {
            0.0
        } else {
            ((0..d).map(|i| s[i] * u[i]).sum::<f64>() / norm).max(0.0)
        };
        let err = sse(u, |i| q * s[i]);
        if err < best.0 {
            best = (err, q);
        }
    }
    ScaleVector::new(vec![0.5 * best.1, 0.5 * best.1])
}

/// Minimizes `‖u − v1 s1 − v2 s2‖²` over `v1 >= v2 >= 0` for fixed sign vectors.
/// The feasible set is a cone with faces `v2 = 0` and `v1 = v2`; the optimum is
/// the unconstrained solution when feasible, otherwise the best face solution.
fn constrained_pair(u: &[f64], s1: &[f64], s2: &[f64]) -> (f64, f64, f64) {
    let d = u.len() as f64;
    let c: f64 = s1.iter().zip(s2).map(|(a, b)| a * b).sum();
    let p1: f64 = s1.iter().zip(u).map(|(a, b)| a * b).sum();
    let p2: f64 = s2.iter().zip(u).map(|(a, b)| a * b).sum();
    let err = |v1: f64, v2: f64| sse(u, |i| v1 * s1[i] + v2 * s2[i]);

    let mut candidates = vec![(0.0, 0.0)];
    let det = d * d - c * c;
    if det.abs() > 1e-12 {
        let v1 = (d * p1 - c * p2) / det;
        let v2 = (d * p2 - c * p1) / det;
        if v1 >= v2 && v2 >= 0.0 {
            candidates.push((v1, v2));
        }
    }
    // face v2 = 0
    candidates.push(((p1 / d).max(0.0), 0.0));
    // face v1 = v2 = t
    let sum_norm = 2.0 * d + 2.0 * c;
    if sum_norm > 0.0 {
        let t = ((p1 + p2) / sum_norm).max(0.0);
        candidates.push((t, t));
    }
    candidates
        .into_iter()
        .map(|(v1, v2)| (err(v1, v2), v1, v2))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("candidate list is non-empty")
}

fn bruteforce_2bit(u: &[f64]) -> Result<ScaleVector> {
    let d = u.len();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![0.0; d];
    for mut code in 0..4usize.pow(d as u32) {
        for i in 0..d {
            let digit = code % 4;
            code /= 4;
            s1[i] = if digit & 1 == 0 { 1.0 } else { -1.0 };
            s2[i] = if digit & 2 == 0 { 1.0 } else { -1.0 };
        }
        let cand = constrained_pair(u, &s1, &s2);
        if cand.0 < best.0 {
            best = cand;
        }
    }
    ScaleVector::new(vec![best.1, best.2])
}
