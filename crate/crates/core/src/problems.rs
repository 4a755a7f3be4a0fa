//! Test problems with stochastic gradient oracles.
//!
//! Every oracle is a pure function of `(w, sample_seed)`. Sample seeds for a
//! run are derived with [`sample_seed`], and all randomness goes through
//! ChaCha8 streams so traces reproduce across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::optim::Shape;
use crate::par::ParRegularizer;

/// A seed plus stream id for a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the sample drawn at step `t` of the run seeded with `run_seed`.
pub fn sample_seed(run_seed: u64, t: usize) -> u64 {
    splitmix64(splitmix64(run_seed) ^ (t as u64).wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Parameter block of a problem, before bit widths are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLayout {
    pub name: String,
    pub shape: Shape,
    pub quantizable: bool,
}

impl GroupLayout {
    pub fn new(name: &str, shape: Shape, quantizable: bool) -> Self {
        Self {
            name: name.to_string(),
            shape,
            quantizable,
        }
    }
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn full_loss(&self, w: &[f64]) -> f64;

    fn full_grad(&self, w: &[f64]) -> Vec<f64>;

    /// Unbiased estimate of `full_grad(w)`, reproducible from `sample_seed`.
    fn stochastic_grad(&self, w: &[f64], sample_seed: u64) -> Vec<f64>;

    /// Held-out metric: accuracy for classifiers, the loss otherwise.
    fn eval_metric(&self, w: &[f64]) -> f64 {
        self.full_loss(w)
    }

    fn initial_point(&self, seed: u64) -> Vec<f64>;

    /// Contiguous parameter blocks covering `0..dim()` in order.
    fn layout(&self) -> Vec<GroupLayout> {
        vec![GroupLayout::new("w", Shape::Flat(self.dim()), true)]
    }

    /// Center `c` when the loss is `½‖w − c‖²`.
    fn quadratic_center(&self) -> Option<&[f64]> {
        None
    }
}

/// `f(w, z) = ½‖w − c − z‖²` with `z ~ N(0, σ² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    c: Vec<f64>,
    sigma: f64,
}

pub fn quadratic_problem(c: Vec<f64>, noise_sigma: f64) -> Result<QuadraticProblem> {
    if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "quadratic center must be non-empty and finite".into(),
        ));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    Ok(QuadraticProblem {
        c,
        sigma: noise_sigma,
    })
}

impl QuadraticProblem {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Problem for QuadraticProblem {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.c.len()
    }

    /// Noise-free part `½‖w − c‖²`; the expected loss adds the constant `½dσ²`.
    fn full_loss(&self, w: &[f64]) -> f64 {
        0.5 * w
            .iter()
            .zip(&self.c)
            .map(|(x, c)| (x - c) * (x - c))
            .sum::<f64>()
    }

    fn full_grad(&self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.c).map(|(x, c)| x - c).collect()
    }

    fn stochastic_grad(&self, w: &[f64], sample_seed: u64) -> Vec<f64> {
        if self.sigma == 0.0 {
            return self.full_grad(w);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        w.iter()
            .zip(&self.c)
            .map(|(x, c)| {
                let z: f64 = rng.sample(StandardNormal);
                x - c - self.sigma * z
            })
            .collect()
    }

    fn initial_point(&self, _seed: u64) -> Vec<f64> {
        vec![0.0; self.c.len()]
    }

    fn quadratic_center(&self) -> Option<&[f64]> {
        Some(&self.c)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major sample matrix with labels.
#[derive(Debug, Clone, PartialEq)]
struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    cols: usize,
}

impl Dataset {
    fn len(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.cols..(i + 1) * self.cols]
    }
}

/// Logistic regression without bias on two Gaussian clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProblem {
    train: Dataset,
    test: Dataset,
    batch_size: usize,
}

pub const DEFAULT_BATCH_SIZE: usize = 16;

/// Clusters at `±separation/2` along a random unit direction with identity
/// covariance; labels are ±1. A test set of the same size is drawn from the
/// same distribution.
pub fn logistic_problem(
    n_samples: usize,
    d: usize,
    separation: f64,
    rng: RngSpec,
) -> Result<LogisticProblem> {
    if n_samples < 2 || d < 1 {
        return Err(Error::InvalidArgument(format!(
            "logistic problem needs n_samples >= 2 and d >= 1, got {n_samples} and {d}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "separation must be nonnegative, got {separation}"
        )));
    }
    let mut gen = rng.rng();
    let mut dir: Vec<f64> = (0..d).map(|_| gen.sample(StandardNormal)).collect();
    let norm = dot(&dir, &dir).sqrt();
    dir.iter_mut().for_each(|x| *x /= norm);
    let draw = |gen: &mut ChaCha8Rng| {
        let mut x = Vec::with_capacity(n_samples * d);
        let mut y = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let label = if gen.random::<bool>() { 1.0 } else { -1.0 };
            for dj in &dir {
                let z: f64 = gen.sample(StandardNormal);
                x.push(label * 0.5 * separation * dj + z);
            }
            y.push(label);
        }
        Dataset { x, y, cols: d }
    };
    let train = draw(&mut gen);
    let test = draw(&mut gen);
    Ok(LogisticProblem {
        train,
        test,
        batch_size: DEFAULT_BATCH_SIZE,
    })
}

impl LogisticProblem {
    pub fn with_batch_size(mut self, batch_size: usize) -> Result<Self> {
        if batch_size < 1 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        self.batch_size = batch_size;
        Ok(self)
    }

    fn accumulate_grad(&self, w: &[f64], i: usize, out: &mut [f64], weight: f64) {
        let x = self.train.row(i);
        let y = self.train.y[i];
        let coef = -y * sigmoid(-y * dot(w, x)) * weight;
        for (o, xj) in out.iter_mut().zip(x) {
            *o += coef * xj;
        }
    }

    pub fn train_accuracy(&self, w: &[f64]) -> f64 {
        accuracy(&self.train, |x| dot(w, x))
    }
}

fn accuracy(data: &Dataset, score: impl Fn(&[f64]) -> f64) -> f64 {
    let hits = (0..data.len())
        .filter(|&i| {
            let positive = score(data.row(i)) >= 0.0;
            positive == (data.y[i] > 0.0)
        })
        .count();
    hits as f64 / data.len() as f64
}

impl Problem for LogisticProblem {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.train.cols
    }

    fn full_loss(&self, w: &[f64]) -> f64 {
        let n = self.train.len();
        (0..n)
            .map(|i| softplus(-self.train.y[i] * dot(w, self.train.row(i))))
            .sum::<f64>()
            / n as f64
    }

    fn full_grad(&self, w: &[f64]) -> Vec<f64> {
        let n = self.train.len();
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            self.accumulate_grad(w, i, &mut g, 1.0 / n as f64);
        }
        g
    }

    fn stochastic_grad(&self, w: &[f64], sample_seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let mut g = vec![0.0; self.dim()];
        let weight = 1.0 / self.batch_size as f64;
        for _ in 0..self.batch_size {
            let i = rng.random_range(0..self.train.len());
            self.accumulate_grad(w, i, &mut g, weight);
        }
        g
    }

    fn eval_metric(&self, w: &[f64]) -> f64 {
        accuracy(&self.test, |x| dot(w, x))
    }

    fn initial_point(&self, seed: u64) -> Vec<f64> {
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let mut rng = RngSpec::new(seed, 1).rng();
        (0..self.dim()).map(|_| normal.sample(&mut rng)).collect()
    }
}

/// Two-moons data pushed through a fixed random linear embedding into
/// `input_dim` features, fitted by a tanh network with one hidden layer and a
/// sigmoid output trained on binary cross-entropy.
///
/// Parameter layout: hidden weights (`hidden × input_dim`, row-major), hidden
/// bias, output weights, output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpProblem {
    train: Dataset,
    test: Dataset,
    hidden: usize,
    input_dim: usize,
    batch_size: usize,
    quantize_output: bool,
    init_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpOptions {
    pub input_dim: usize,
    pub noise: f64,
    pub batch_size: usize,
    /// Quantize the output weights too; by default they stay full precision.
    pub quantize_output: bool,
    /// Multiplier on the `1/sqrt(fan_in)` initialization scale.
    pub init_scale: f64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self {
            input_dim: 8,
            noise: 0.1,
            batch_size: 32,
            quantize_output: false,
            init_scale: 1.0,
        }
    }
}

pub fn mlp_problem(hidden_width: usize, n_samples: usize, rng: RngSpec) -> Result<MlpProblem> {
    mlp_problem_with(hidden_width, n_samples, rng, MlpOptions::default())
}

pub fn mlp_problem_with(
    hidden_width: usize,
    n_samples: usize,
    rng: RngSpec,
    opts: MlpOptions,
) -> Result<MlpProblem> {
    if hidden_width < 1 || n_samples < 2 || opts.input_dim < 2 || opts.batch_size < 1 {
        return Err(Error::InvalidArgument(
            "mlp problem needs hidden width >= 1, n_samples >= 2, input_dim >= 2, batch >= 1"
                .into(),
        ));
    }
    if !(opts.noise >= 0.0 && opts.init_scale > 0.0) {
        return Err(Error::InvalidArgument(
            "mlp noise must be nonnegative and init scale positive".into(),
        ));
    }
    let mut gen = rng.rng();
    let p = opts.input_dim;
    // first two features are the moons themselves, the rest random mixtures
    let mut embed = vec![0.0; p * 2];
    embed[0] = 1.0;
    embed[3] = 1.0;
    for v in embed.iter_mut().skip(4) {
        *v = gen.sample::<f64, _>(StandardNormal) / 2f64.sqrt();
    }
    let noise = Normal::new(0.0, opts.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let draw = |gen: &mut ChaCha8Rng| {
        let mut x = Vec::with_capacity(n_samples * p);
        let mut y = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let upper = gen.random::<bool>();
            let t = gen.random_range(0.0..std::f64::consts::PI);
            let (mx, my) = if upper {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let (mx, my) = (mx - 0.5 + noise.sample(gen), my - 0.25 + noise.sample(gen));
            for r in 0..p {
                x.push(embed[2 * r] * mx + embed[2 * r + 1] * my);
            }
            y.push(if upper { 0.0 } else { 1.0 });
        }
        Dataset { x, y, cols: p }
    };
    let train = draw(&mut gen);
    let test = draw(&mut gen);
    Ok(MlpProblem {
        train,
        test,
        hidden: hidden_width,
        input_dim: p,
        batch_size: opts.batch_size,
        quantize_output: opts.quantize_output,
        init_scale: opts.init_scale,
    })
}

struct MlpView<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: f64,
}

impl MlpProblem {
    fn view<'a>(&self, w: &'a [f64]) -> MlpView<'a> {
        let (h, p) = (self.hidden, self.input_dim);
        MlpView {
            w1: &w[..h * p],
            b1: &w[h * p..h * p + h],
            w2: &w[h * p + h..h * p + 2 * h],
            b2: w[h * p + 2 * h],
        }
    }

    fn hidden_activations(&self, v: &MlpView, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &v.w1[j * self.input_dim..(j + 1) * self.input_dim];
            *o = (dot(row, x) + v.b1[j]).tanh();
        }
    }

    fn logit(&self, w: &[f64], x: &[f64]) -> f64 {
        let v = self.view(w);
        let mut h = vec![0.0; self.hidden];
        self.hidden_activations(&v, x, &mut h);
        dot(v.w2, &h) + v.b2
    }

    /// Adds `weight · ∇ loss_i` into `out`.
    fn accumulate_grad(
        &self,
        w: &[f64],
        x: &[f64],
        y: f64,
        out: &mut [f64],
        weight: f64,
        h: &mut [f64],
    ) {
        let v = self.view(w);
        self.hidden_activations(&v, x, h);
        let o = dot(v.w2, h) + v.b2;
        let delta = (sigmoid(o) - y) * weight;
        let (hp, hh) = (self.hidden * self.input_dim, self.hidden);
        for j in 0..hh {
            let dz = delta * v.w2[j] * (1.0 - h[j] * h[j]);
            let row = &mut out[j * self.input_dim..(j + 1) * self.input_dim];
            for (r, xk) in row.iter_mut().zip(x) {
                *r += dz * xk;
            }
            out[hp + j] += dz;
            out[hp + hh + j] += delta * h[j];
        }
        out[hp + 2 * hh] += delta;
    }

    pub fn train_accuracy(&self, w: &[f64]) -> f64 {
        accuracy(&self.train, |x| self.logit(w, x))
    }
}

impl Problem for MlpProblem {
    fn name(&self) -> &str {
        "mlp"
    }

    fn dim(&self) -> usize {
        self.hidden * self.input_dim + 2 * self.hidden + 1
    }

    fn full_loss(&self, w: &[f64]) -> f64 {
        let n = self.train.len();
        (0..n)
            .map(|i| {
                let o = self.logit(w, self.train.row(i));
                softplus(o) - self.train.y[i] * o
            })
            .sum::<f64>()
            / n as f64
    }

    fn full_grad(&self, w: &[f64]) -> Vec<f64> {
        let n = self.train.len();
        let mut g = vec![0.0; self.dim()];
        let mut h = vec![0.0; self.hidden];
        for i in 0..n {
            self.accumulate_grad(
                w,
                self.train.row(i),
                self.train.y[i],
                &mut g,
                1.0 / n as f64,
                &mut h,
            );
        }
        g
    }

    fn stochastic_grad(&self, w: &[f64], sample_seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let mut g = vec![0.0; self.dim()];
        let mut h = vec![0.0; self.hidden];
        let weight = 1.0 / self.batch_size as f64;
        for _ in 0..self.batch_size {
            let i = rng.random_range(0..self.train.len());
            self.accumulate_grad(
                w,
                self.train.row(i),
                self.train.y[i],
                &mut g,
                weight,
                &mut h,
            );
        }
        g
    }

    fn eval_metric(&self, w: &[f64]) -> f64 {
        accuracy(&self.test, |x| self.logit(w, x))
    }

    fn initial_point(&self, seed: u64) -> Vec<f64> {
        let mut rng = RngSpec::new(seed, 1).rng();
        let s1 = self.init_scale / (self.input_dim as f64).sqrt();
        let s2 = self.init_scale / (self.hidden as f64).sqrt();
        let mut w = vec![0.0; self.dim()];
        let v = self.weight_ranges();
        for x in &mut w[v.0.clone()] {
            *x = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        for x in &mut w[v.1.clone()] {
            *x = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        w
    }

    fn layout(&self) -> Vec<GroupLayout> {
        vec![
            GroupLayout::new(
                "hidden.weight",
                Shape::Matrix {
                    rows: self.hidden,
                    cols: self.input_dim,
                },
                true,
            ),
            GroupLayout::new("hidden.bias", Shape::Flat(self.hidden), false),
            GroupLayout::new(
                "output.weight",
                Shape::Flat(self.hidden),
                self.quantize_output,
            ),
            GroupLayout::new("output.bias", Shape::Flat(1), false),
        ]
    }
}

impl MlpProblem {
    fn weight_ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let hp = self.hidden * self.input_dim;
        (0..hp, hp + self.hidden..hp + 2 * self.hidden)
    }
}

/// Minimizer and value of `F_λ = full_loss + λΨ` (or of the loss alone when
/// `reg` is `None`) by brute-force search.
///
/// The separable quadratic is searched coordinate-wise on a 10⁻⁶ grid over
/// `[-q_m, q_m]`, refined by trisection and snapped to a breakpoint when one
/// is at least as good. Other problems with `dim <= 2` use a coarse-to-fine
/// grid over the same box, down to a 10⁻⁶ spacing.
pub fn regularized_optimum(
    problem: &dyn Problem,
    reg: Option<&ParRegularizer>,
) -> Result<(Vec<f64>, f64)> {
    let objective = |w: &[f64]| problem.full_loss(w) + reg.map_or(0.0, |r| r.eval(w));
    if let Some(c) = problem.quadratic_center() {
        let w: Vec<f64> = match reg {
            None => c.to_vec(),
            Some(r) => c.iter().map(|ci| separable_minimizer(r, *ci)).collect(),
        };
        let f = objective(&w);
        return Ok((w, f));
    }
    let reg = reg.ok_or_else(|| {
        Error::Unsupported(format!(
            "no optimum oracle for unregularized {} problem",
            problem.name()
        ))
    })?;
    if problem.dim() > 2 {
        return Err(Error::Unsupported(format!(
            "no optimum oracle for {} problem of dimension {}",
            problem.name(),
            problem.dim()
        )));
    }
    let w = box_search(&objective, problem.dim(), reg.q_max());
    let f = objective(&w);
    Ok((w, f))
}

pub const ORACLE_GRID_STEP: f64 = 1e-6;

/// Brute-force `argmin_w ½(w − c)² + λΨ(w)` over `[-q_m, q_m]`.
pub fn separable_minimizer(reg: &ParRegularizer, c: f64) -> f64 {
    let phi = |w: f64| 0.5 * (w - c) * (w - c) + reg.lambda() * reg.psi(w);
    let qm = reg.q_max();
    let n = (2.0 * qm / ORACLE_GRID_STEP).ceil() as usize;
    let h = 2.0 * qm / n as f64;
    let (mut best, mut best_f) = (-qm, phi(-qm));
    for i in 1..=n {
        let w = -qm + i as f64 * h;
        let f = phi(w);
        if f < best_f {
            best = w;
            best_f = f;
        }
    }
    let (mut lo, mut hi) = ((best - h).max(-qm), (best + h).min(qm));
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if phi(m1) <= phi(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let refined = 0.5 * (lo + hi);
    if phi(refined) < best_f {
        best = refined;
        best_f = phi(refined);
    }
    snap_to_breakpoint(reg, &phi, best, best_f)
}

fn snap_to_breakpoint(
    reg: &ParRegularizer,
    phi: &dyn Fn(f64) -> f64,
    best: f64,
    best_f: f64,
) -> f64 {
    let slack = 4.0 * f64::EPSILON * best_f.abs().max(1.0);
    let mut out = (best, best_f);
    let mut snapped = false;
    for q in reg.breakpoints() {
        for v in [*q, -*q] {
            let f = phi(v);
            if f <= best_f + slack && (!snapped || f < out.1) {
                out = (v, f);
                snapped = true;
            }
        }
    }
    out.0
}

fn box_search(objective: &dyn Fn(&[f64]) -> f64, d: usize, radius: f64) -> Vec<f64> {
    const POINTS: usize = 200;
    let mut center = vec![0.0; d];
    let mut half = radius;
    let mut best = center.clone();
    let mut best_f = objective(&best);
    while half > ORACLE_GRID_STEP {
        let h = 2.0 * half / POINTS as f64;
        let axis: Vec<Vec<f64>> = center
            .iter()
            .map(|c| {
                (0..=POINTS)
                    .map(|i| (c - half + i as f64 * h).clamp(-radius, radius))
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; d];
        loop {
            let w: Vec<f64> = idx.iter().zip(&axis).map(|(i, a)| a[*i]).collect();
            let f = objective(&w);
            if f < best_f {
                best_f = f;
                best = w;
            }
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] <= POINTS {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        center = best.clone();
        half = 4.0 * h;
    }
    best
}

/// Gradient-norm bound for step-size rules: the largest stochastic gradient
/// norm over `samples` points drawn uniformly from `[-radius, radius]^d`, plus
/// `λ a_{m−1} √d` for the regularizer.
pub fn estimate_gradient_bound(
    problem: &dyn Problem,
    reg: Option<&ParRegularizer>,
    radius: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let d = problem.dim();
    let mut rng = RngSpec::new(seed, 7).rng();
    let mut g_max: f64 = 0.0;
    for i in 0..samples {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..=radius)).collect();
        let g = problem.stochastic_grad(&w, sample_seed(seed, i));
        g_max = g_max.max(dot(&g, &g).sqrt());
    }
    g_max + reg.map_or(0.0, |r| r.lambda() * r.max_slope() * (d as f64).sqrt())
}
