//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random PAR parameters: `q_0 = 0 < q_1 < … < q_m` and `0 <= a_0 < … < a_{m-1}`.
pub fn random_par(rng: &mut ChaCha8Rng, max_pieces: usize) -> (Vec<f64>, Vec<f64>) {
    let m = rng.random_range(1..=max_pieces);
    let mut q = vec![0.0];
    for _ in 0..m {
        let last = *q.last().unwrap();
        q.push(last + rng.random_range(0.05..1.0));
    }
    let mut a = Vec::with_capacity(m);
    let mut s = if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random_range(0.0..0.5)
    };
    for _ in 0..m {
        a.push(s);
        s += rng.random_range(0.05..1.0);
    }
    (q, a)
}

/// `Psi(x)` as the maximum of its affine pieces, `+inf` beyond `q_m`.
pub fn psi_oracle(q: &[f64], a: &[f64], x: f64) -> f64 {
    let x = x.abs();
    let qm = *q.last().unwrap();
    if x > qm * (1.0 + 1e-15) {
        return f64::INFINITY;
    }
    let mut b = 0.0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..a.len() {
        if k > 0 {
            b += a[k - 1] * (q[k] - q[k - 1]);
        }
        best = best.max(a[k] * (x - q[k]) + b);
    }
    best
}

/// Dense scan of a function on `[lo, hi]` followed by golden-section search
/// in the bracket around the best sample. A candidate replaces the result when
/// its value is within 1e-12 of it, which snaps kinks lost to rounding.
pub fn minimize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, candidates: &[f64]) -> f64 {
    const SAMPLES: usize = 4000;
    let h = (hi - lo) / SAMPLES as f64;
    let mut best_i = 0;
    let mut best_f = f(lo);
    for i in 1..=SAMPLES {
        let v = f(lo + i as f64 * h);
        if v < best_f {
            best_f = v;
            best_i = i;
        }
    }
    let mut l = lo + best_i.saturating_sub(1) as f64 * h;
    let mut r = (lo + (best_i + 1) as f64 * h).min(hi);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = r - phi * (r - l);
        let x2 = l + phi * (r - l);
        if f(x1) <= f(x2) {
            r = x2;
        } else {
            l = x1;
        }
    }
    let mut best = 0.5 * (l + r);
    let fb = f(best);
    let mut best_c = f64::INFINITY;
    for &c in candidates {
        if c >= lo && c <= hi && f(c) <= fb + 1e-12 && f(c) < best_c {
            best = c;
            best_c = f(c);
        }
    }
    best
}

/// `argmin_w scale·Psi(w) + ½(w − u)²` by direct search over `[-q_m, q_m]`.
pub fn prox_oracle(q: &[f64], a: &[f64], scale: f64, u: f64) -> f64 {
    let qm = *q.last().unwrap();
    let f = |w: f64| scale * psi_oracle(q, a, w) + 0.5 * (w - u) * (w - u);
    let cands: Vec<f64> = q.iter().flat_map(|x| [*x, -*x]).collect();
    minimize_1d(f, -qm, qm, &cands)
}

/// `argmin_w ½ α (w − c)² + λ Psi(w)`.
pub fn separable_oracle(q: &[f64], a: &[f64], lambda: f64, alpha: f64, c: f64) -> f64 {
    let qm = *q.last().unwrap();
    let f = |w: f64| 0.5 * alpha * (w - c) * (w - c) + lambda * psi_oracle(q, a, w);
    let cands: Vec<f64> = q.iter().flat_map(|x| [*x, -*x]).collect();
    minimize_1d(f, -qm, qm, &cands)
}

/// Hard-threshold map with jumps at `λ a_k`: `sgn(x) q_k` with
/// `k = #{j : λ a_j < |x|}`.
pub fn hard_threshold_oracle(q: &[f64], a: &[f64], lambda: f64, x: f64) -> f64 {
    let k = a.iter().filter(|aj| lambda * **aj < x.abs()).count();
    q[k].copysign(x)
}

/// Best 1-bit error: every sign vector, with `v = max(0, s·u / d)`.
pub fn exhaustive_1bit(u: &[f64]) -> f64 {
    let d = u.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << d) {
        let s: Vec<f64> = (0..d)
            .map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        let v = (s.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / d as f64).max(0.0);
        let err: f64 = s.iter().zip(u).map(|(si, ui)| (ui - v * si).powi(2)).sum();
        best = best.min(err);
    }
    best
}

/// Best ternary error: every `s ∈ {-1, 0, 1}^d`, with `v = max(0, s·u / |s|²)`.
pub fn exhaustive_ternary(u: &[f64]) -> f64 {
    let d = u.len();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(d as u32) {
        let mut c = code;
        let s: Vec<f64> = (0..d)
            .map(|_| {
                let digit = c % 3;
                c /= 3;
                digit as f64 - 1.0
            })
            .collect();
        let nnz: f64 = s.iter().map(|x| x * x).sum();
        let v = if nnz == 0.0 {
            0.0
        } else {
            (s.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / nnz).max(0.0)
        };
        let err: f64 = s.iter().zip(u).map(|(si, ui)| (ui - v * si).powi(2)).sum();
        best = best.min(err);
    }
    best
}

/// Best two-scale error over grids `{±p, ±r}`, `0 <= p <= r`: every split of
/// the coordinates into an inner and an outer level, signs following `u`.
pub fn exhaustive_2bit(u: &[f64]) -> f64 {
    let d = u.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << d) {
        let (mut inner, mut outer) = (Vec::new(), Vec::new());
        for (i, x) in u.iter().enumerate() {
            if mask >> i & 1 == 1 {
                outer.push(x.abs());
            } else {
                inner.push(x.abs());
            }
        }
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let (p, r) = (mean(&inner), mean(&outer));
        if !inner.is_empty() && !outer.is_empty() && p > r {
            continue;
        }
        let err: f64 = inner.iter().map(|x| (x - p).powi(2)).sum::<f64>()
            + outer.iter().map(|x| (x - r).powi(2)).sum::<f64>();
        best = best.min(err);
    }
    best
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}
