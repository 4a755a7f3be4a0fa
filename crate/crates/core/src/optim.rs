//! Optimizer state machines and schedules.
//!
//! All quantizing optimizers keep a full-precision latent vector `u` next to
//! the iterate `w` at which gradients are evaluated. They differ only in what
//! they accumulate on and which element-wise map turns `u` into `w`:
//!
//! | method        | latent update          | map                               |
//! |---------------|------------------------|-----------------------------------|
//! | SGD           | `w − η g`              | identity                          |
//! | Prox-SGD      | `w − η g`              | PAR prox scaled by `η λ`          |
//! | AProx         | `u − η g`              | PAR prox scaled by `γ λ`, `γ = Σ η` |
//! | BinaryConnect | `u − η g`              | hard quantization                 |
//! | PARQ          | `u − η g`              | PARQ map on an LSBQ grid          |
//! | BinaryRelax   | `u − η g`              | BinaryRelax map on an LSBQ grid   |
//!
//! The weighted average `Σ η_s w^s / Σ η_s` pairs each step size with the
//! iterate the gradient was taken at, i.e. `w` before the update.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lsbq::{grid_from_scales, lsbq, BitWidth};
use crate::par::{prox_binaryrelax, prox_parq, ParRegularizer, ProxOperator};
use crate::quantgrid::{hard_quantize, QuantGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant {
        base: f64,
    },
    /// `base / sqrt(t)`; with `base = R / (2G)` this is the step size of the
    /// last-iterate bound.
    InverseSqrt {
        base: f64,
    },
    /// `base · decay^(number of milestones <= t)`.
    Multistep {
        base: f64,
        milestones: Vec<usize>,
        decay: f64,
    },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let base = match self {
            StepSchedule::Constant { base } | StepSchedule::InverseSqrt { base } => *base,
            StepSchedule::Multistep { base, decay, .. } => {
                if !(*decay > 0.0 && decay.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "multistep decay must be positive, got {decay}"
                    )));
                }
                *base
            }
        };
        if !(base > 0.0 && base.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size base must be positive, got {base}"
            )));
        }
        Ok(())
    }

    /// Step size `η_t` for `t >= 1`.
    pub fn eta(&self, t: usize) -> Result<f64> {
        if t < 1 {
            return Err(Error::Domain("step schedules start at t = 1".into()));
        }
        Ok(match self {
            StepSchedule::Constant { base } => *base,
            StepSchedule::InverseSqrt { base } => base / (t as f64).sqrt(),
            StepSchedule::Multistep {
                base,
                milestones,
                decay,
            } => {
                let passed = milestones.iter().filter(|m| **m <= t).count();
                base * decay.powi(passed as i32)
            }
        })
    }
}

pub fn schedule_eta(sched: &StepSchedule, t: usize) -> Result<f64> {
    sched.eta(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SlopeKind {
    Cosine,
    Sigmoid {
        #[serde(default = "default_steepness")]
        steepness: f64,
    },
    /// Inverse slope stays at 1: PARQ is the clipped identity throughout.
    ConstantOne,
    /// Inverse slope is 0 from the first step: hard quantization throughout.
    Hard,
}

fn default_steepness() -> f64 {
    50.0
}

pub const DEFAULT_SATURATION_FRACTION: f64 = 0.93;

/// Schedule for the inverse slope `ρ_t⁻¹`, nonincreasing from about 1 to
/// exactly 0 at `t = ⌈saturation_fraction · T⌉` and 0 afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeSchedule {
    pub kind: SlopeKind,
    pub total_steps: usize,
    pub saturation_fraction: f64,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SlopeSchedule {
    pub fn new(kind: SlopeKind, total_steps: usize, saturation_fraction: f64) -> Result<Self> {
        if total_steps < 1 {
            return Err(Error::InvalidArgument("slope schedule needs T >= 1".into()));
        }
        if !(saturation_fraction > 0.0 && saturation_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "saturation fraction must lie in (0, 1], got {saturation_fraction}"
            )));
        }
        if let SlopeKind::Sigmoid { steepness } = kind {
            if !(steepness > 0.0 && steepness.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "sigmoid steepness must be positive, got {steepness}"
                )));
            }
        }
        Ok(Self {
            kind,
            total_steps,
            saturation_fraction,
        })
    }

    pub fn inv_slope(&self, t: usize) -> Result<f64> {
        if t < 1 || t > self.total_steps {
            return Err(Error::Domain(format!(
                "slope schedule queried at t = {t}, outside [1, {}]",
                self.total_steps
            )));
        }
        let t_sat = self.saturation_fraction * self.total_steps as f64;
        let x = t as f64 / t_sat;
        Ok(match self.kind {
            SlopeKind::ConstantOne => 1.0,
            SlopeKind::Hard => 0.0,
            _ if x >= 1.0 => 0.0,
            SlopeKind::Cosine => 0.5 * (1.0 + (PI * x).cos()),
            SlopeKind::Sigmoid { steepness: k } => {
                let top = logistic(0.5 * k);
                let bottom = logistic(-0.5 * k);
                ((logistic(-k * (x - 0.5)) - bottom) / (top - bottom)).clamp(0.0, 1.0)
            }
        })
    }

    /// `ρ_t = 1 / ρ_t⁻¹`, infinite once the inverse slope reaches 0.
    pub fn slope(&self, t: usize) -> Result<f64> {
        let inv = self.inv_slope(t)?;
        Ok(if inv == 0.0 { f64::INFINITY } else { 1.0 / inv })
    }
}

pub fn schedule_inv_slope(sched: &SlopeSchedule, t: usize) -> Result<f64> {
    sched.inv_slope(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    PerTensor,
    PerRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Flat(usize),
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match self {
            Shape::Flat(n) => *n,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A block of parameters sharing one quantization setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub shape: Shape,
    pub granularity: Granularity,
    pub bits: BitWidth,
    pub quantize: bool,
}

impl ParamGroup {
    pub fn new(
        name: impl Into<String>,
        shape: Shape,
        granularity: Granularity,
        bits: BitWidth,
        quantize: bool,
    ) -> Result<Self> {
        let name = name.into();
        if granularity == Granularity::PerRow && !matches!(shape, Shape::Matrix { .. }) {
            return Err(Error::InvalidArgument(format!(
                "group {name}: per-row granularity needs a 2-D shape"
            )));
        }
        if shape.is_empty() {
            return Err(Error::InvalidArgument(format!("group {name} is empty")));
        }
        bits.validate()?;
        Ok(Self {
            name,
            shape,
            granularity,
            bits,
            quantize,
        })
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    /// Index ranges sharing one grid.
    #[allow(clippy::single_range_in_vec_init)]
    pub fn slices(&self) -> Vec<Range<usize>> {
        match (self.granularity, self.shape) {
            (Granularity::PerRow, Shape::Matrix { rows, cols }) => {
                (0..rows).map(|r| r * cols..(r + 1) * cols).collect()
            }
            _ => vec![0..self.len()],
        }
    }
}

/// Extra terms applied to the latent update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepOptions {
    /// Heavy-ball coefficient on the latent update; 0 disables momentum.
    pub momentum: f64,
    pub weight_decay: f64,
    /// Shrink the latent vector by `1 − η·weight_decay` instead of adding
    /// `weight_decay · w` to the gradient.
    pub decoupled_weight_decay: bool,
    /// Recompute LSBQ grids every this many steps.
    pub grid_refresh_every: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            momentum: 0.0,
            weight_decay: 0.0,
            decoupled_weight_decay: false,
            grid_refresh_every: 1,
        }
    }
}

impl StepOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if self.grid_refresh_every < 1 {
            return Err(Error::InvalidArgument(
                "grid refresh interval must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// Latent full-precision vector.
    pub u: Vec<f64>,
    /// Iterate at which gradients are evaluated.
    pub w: Vec<f64>,
    /// Aggregate step size `Σ_{s<=t} η_s`.
    pub gamma: f64,
    /// Number of updates applied.
    pub t: usize,
    wbar_num: Vec<f64>,
    wbar_den: f64,
    velocity: Vec<f64>,
    grids: Vec<QuantGrid>,
    options: StepOptions,
}

enum Base {
    Iterate,
    Latent,
}

impl OptimizerState {
    /// Starts at `u = w = w0`.
    pub fn new(w0: Vec<f64>) -> Self {
        let d = w0.len();
        Self {
            u: w0.clone(),
            w: w0,
            gamma: 0.0,
            t: 0,
            wbar_num: vec![0.0; d],
            wbar_den: 0.0,
            velocity: vec![0.0; d],
            grids: Vec::new(),
            options: StepOptions::default(),
        }
    }

    pub fn with_options(mut self, options: StepOptions) -> Result<Self> {
        options.validate()?;
        self.options = options;
        Ok(self)
    }

    pub fn options(&self) -> &StepOptions {
        &self.options
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Grids used by the last PARQ/BinaryRelax step, one per slice.
    pub fn grids(&self) -> &[QuantGrid] {
        &self.grids
    }

    /// `Σ η_s w^s / Σ η_s` over the iterates gradients were taken at.
    pub fn average_iterate(&self) -> Result<Vec<f64>> {
        if self.t == 0 {
            return Err(Error::Domain(
                "no iterates to average before the first step".into(),
            ));
        }
        Ok(self.wbar_num.iter().map(|x| x / self.wbar_den).collect())
    }

    /// The average after also weighting the current iterate by `eta`, i.e. the
    /// average the next update will have recorded.
    pub fn average_including_current(&self, eta: f64) -> Vec<f64> {
        let den = self.wbar_den + eta;
        self.wbar_num
            .iter()
            .zip(&self.w)
            .map(|(n, w)| (n + eta * w) / den)
            .collect()
    }

    /// Bookkeeping shared by every step, then the new latent vector.
    fn advance(&mut self, grad: &[f64], eta: f64, base: Base) -> Result<()> {
        check_len(self.dim(), grad.len())?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive and finite, got {eta}"
            )));
        }
        for (acc, w) in self.wbar_num.iter_mut().zip(&self.w) {
            *acc += eta * w;
        }
        self.wbar_den += eta;
        self.gamma += eta;
        self.t += 1;

        let opts = self.options;
        let coupled_wd = if opts.decoupled_weight_decay {
            0.0
        } else {
            opts.weight_decay
        };
        let shrink = if opts.decoupled_weight_decay {
            1.0 - eta * opts.weight_decay
        } else {
            1.0
        };
        let base = match base {
            Base::Iterate => &self.w,
            Base::Latent => &self.u,
        };
        let mut next = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut g = grad[i] + coupled_wd * self.w[i];
            if opts.momentum > 0.0 {
                self.velocity[i] = opts.momentum * self.velocity[i] + g;
                g = self.velocity[i];
            }
            next.push(shrink * base[i] - eta * g);
        }
        self.u = next;
        Ok(())
    }

    fn refresh_grids(&mut self, group: &ParamGroup) -> Result<()> {
        check_len(group.len(), self.dim())?;
        let due =
            self.grids.is_empty() || (self.t - 1).is_multiple_of(self.options.grid_refresh_every);
        if due {
            self.grids = group
                .slices()
                .into_iter()
                .map(|r| Ok(grid_from_scales(&lsbq(&self.u[r], group.bits)?)))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    fn map_slices(
        &mut self,
        group: &ParamGroup,
        map: impl Fn(&[f64], &QuantGrid) -> Result<Vec<f64>>,
    ) -> Result<()> {
        let mut w = Vec::with_capacity(self.dim());
        for (range, grid) in group.slices().into_iter().zip(&self.grids) {
            w.extend(map(&self.u[range], grid)?);
        }
        self.w = w;
        Ok(())
    }
}

/// `w ← w − η g`, with `u` tracking `w`.
pub fn sgd_step(state: &mut OptimizerState, grad: &[f64], eta: f64) -> Result<()> {
    state.advance(grad, eta, Base::Iterate)?;
    state.w = state.u.clone();
    Ok(())
}

/// `u ← w − η g`, `w ← prox_{ηλΨ}(u)`.
pub fn prox_sgd_step(
    state: &mut OptimizerState,
    grad: &[f64],
    eta: f64,
    reg: &ParRegularizer,
) -> Result<()> {
    state.advance(grad, eta, Base::Iterate)?;
    state.w = reg.prox_step(eta, &state.u);
    Ok(())
}

/// `u ← u − η g`, `γ ← γ + η`, `w ← prox_{γλΨ}(u)`.
///
/// With [`ProxOperator::Hard`] this is exactly BinaryConnect.
pub fn aprox_step(
    state: &mut OptimizerState,
    grad: &[f64],
    eta: f64,
    prox: &ProxOperator,
) -> Result<()> {
    state.advance(grad, eta, Base::Latent)?;
    state.w = prox.apply(state.gamma, &state.u)?;
    Ok(())
}

/// `u ← u − η g`, `w ← Q(u)`. The gradient must have been taken at the
/// previous `w`.
pub fn binaryconnect_step(
    state: &mut OptimizerState,
    grad: &[f64],
    eta: f64,
    grid: &QuantGrid,
) -> Result<()> {
    state.advance(grad, eta, Base::Latent)?;
    state.w = hard_quantize(&state.u, grid);
    Ok(())
}

/// One PARQ iteration: latent update, LSBQ grid per slice of `group`, then
/// the PARQ map with slope `slope` (`+inf` for hard quantization).
pub fn parq_step(
    state: &mut OptimizerState,
    grad: &[f64],
    eta: f64,
    slope: f64,
    group: &ParamGroup,
) -> Result<()> {
    if !(slope >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "PARQ slope must be at least 1, got {slope}"
        )));
    }
    state.advance(grad, eta, Base::Latent)?;
    state.refresh_grids(group)?;
    state.map_slices(group, |u, grid| prox_parq(u, grid, slope))
}

/// BinaryRelax iteration: as [`parq_step`] with the relaxation map of weight `relax`.
pub fn binaryrelax_step(
    state: &mut OptimizerState,
    grad: &[f64],
    eta: f64,
    relax: f64,
    group: &ParamGroup,
) -> Result<()> {
    if !(relax >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "BinaryRelax weight must be nonnegative, got {relax}"
        )));
    }
    state.advance(grad, eta, Base::Latent)?;
    state.refresh_grids(group)?;
    state.map_slices(group, |u, grid| prox_binaryrelax(u, grid, relax))
}

/// BinaryConnect with a grid estimated by LSBQ on every refresh.
pub fn lsbq_binaryconnect_step(
    state: &mut OptimizerState,
    grad: &[f64],
    eta: f64,
    group: &ParamGroup,
) -> Result<()> {
    state.advance(grad, eta, Base::Latent)?;
    state.refresh_grids(group)?;
    state.map_slices(group, |u, grid| Ok(hard_quantize(u, grid)))
}

pub fn average_iterate(state: &OptimizerState) -> Result<Vec<f64>> {
    state.average_iterate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(v: &[f64]) -> QuantGrid {
        QuantGrid::from_unsorted(v.to_vec()).unwrap()
    }

    fn ternary_reg() -> ParRegularizer {
        ParRegularizer::from_grid(&grid(&[-1.0, 0.0, 1.0]), 1.0).unwrap()
    }

    fn flat(n: usize, bits: BitWidth) -> ParamGroup {
        ParamGroup::new("g", Shape::Flat(n), Granularity::PerTensor, bits, true).unwrap()
    }

    #[test]
    fn sgd_examples() {
        let mut s = OptimizerState::new(vec![1.0]);
        sgd_step(&mut s, &[2.0], 0.5).unwrap();
        assert_eq!(s.w, vec![0.0]);
        assert_eq!(s.u, s.w);

        let mut s = OptimizerState::new(vec![0.3]);
        sgd_step(&mut s, &[0.0], 0.5).unwrap();
        assert_eq!(s.w, vec![0.3]);

        let mut s = OptimizerState::new(vec![0.0]);
        sgd_step(&mut s, &[1.0], 1.0).unwrap();
        sgd_step(&mut s, &[-1.0], 1.0).unwrap();
        assert_eq!(s.w, vec![0.0]);
        assert_eq!((s.t, s.gamma), (2, 2.0));
    }

    #[test]
    fn step_errors() {
        let mut s = OptimizerState::new(vec![0.0, 0.0]);
        assert!(matches!(
            sgd_step(&mut s, &[1.0], 0.1),
            Err(Error::ShapeMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(sgd_step(&mut s, &[1.0, 1.0], 0.0).is_err());
        assert!(sgd_step(&mut s, &[1.0, 1.0], f64::NAN).is_err());
        assert_eq!(s.t, 0);
    }

    #[test]
    fn prox_sgd_examples() {
        let reg = ternary_reg();
        let mut s = OptimizerState::new(vec![0.8]);
        prox_sgd_step(&mut s, &[0.0], 0.1, &reg).unwrap();
        assert_eq!(s.u, vec![0.8]);
        assert!((s.w[0] - 0.75).abs() < 1e-15);

        let mut s = OptimizerState::new(vec![0.0]);
        prox_sgd_step(&mut s, &[0.0], 0.01, &reg).unwrap();
        assert_eq!(s.w, vec![0.0]);
    }

    #[test]
    fn prox_sgd_vanishing_step_is_gradient_step() {
        let reg = ternary_reg();
        let mut s = OptimizerState::new(vec![0.3]);
        prox_sgd_step(&mut s, &[1.0], 1e-9, &reg).unwrap();
        assert!((s.w[0] - (0.3 - 1e-9)).abs() < 1e-8);
    }

    #[test]
    fn aprox_examples() {
        let prox = ProxOperator::Par(ternary_reg());
        let mut s = OptimizerState::new(vec![0.2]);
        aprox_step(&mut s, &[0.0], 1.0, &prox).unwrap();
        assert_eq!(s.gamma, 1.0);
        assert_eq!(s.w, vec![0.0]);

        let mut s = OptimizerState::new(vec![0.5]);
        for _ in 0..8 {
            aprox_step(&mut s, &[0.25], 0.5, &prox).unwrap();
        }
        assert_eq!(s.u, vec![0.5 - 8.0 * 0.5 * 0.25]);
    }

    #[test]
    fn aprox_with_indicator_is_binaryconnect() {
        let g = grid(&[-1.0, 0.0, 1.0]);
        let prox = ProxOperator::Hard(g.clone());
        let mut a = OptimizerState::new(vec![0.1, -0.7, 0.4]);
        let mut b = a.clone();
        let grads = [[0.3, -0.2, 0.9], [-1.0, 0.4, 0.1], [0.05, 0.05, -2.0]];
        for (k, gr) in grads.iter().enumerate() {
            let eta = 0.7 / (k + 1) as f64;
            aprox_step(&mut a, gr, eta, &prox).unwrap();
            binaryconnect_step(&mut b, gr, eta, &g).unwrap();
            assert_eq!(a.w, b.w);
            assert_eq!(a.u, b.u);
        }
    }

    #[test]
    fn binaryconnect_examples() {
        let g = grid(&[-1.0, 1.0]);
        let mut s = OptimizerState::new(vec![0.4]);
        binaryconnect_step(&mut s, &[-0.2], 1.0, &g).unwrap();
        assert!((s.u[0] - 0.6).abs() < 1e-15);
        assert_eq!(s.w, vec![1.0]);

        let mut s = OptimizerState::new(vec![-0.1]);
        binaryconnect_step(&mut s, &[0.2], 1.0, &g).unwrap();
        assert!((s.u[0] + 0.3).abs() < 1e-15);
        assert_eq!(s.w, vec![-1.0]);

        let mut s = OptimizerState::new(vec![0.4]);
        binaryconnect_step(&mut s, &[0.0], 1.0, &g).unwrap();
        binaryconnect_step(&mut s, &[0.0], 1.0, &g).unwrap();
        assert_eq!((s.u[0], s.w[0]), (0.4, 1.0));
    }

    #[test]
    fn parq_examples() {
        let group = flat(2, BitWidth::Bits(1));
        let mut s = OptimizerState::new(vec![1.0, -3.0]);
        parq_step(&mut s, &[0.0, 0.0], 0.1, 1.0, &group).unwrap();
        assert_eq!(s.grids()[0].values(), &[-2.0, 2.0]);
        assert_eq!(s.w, vec![1.0, -2.0]);

        let mut s = OptimizerState::new(vec![1.0, -3.0]);
        parq_step(&mut s, &[0.0, 0.0], 0.1, f64::INFINITY, &group).unwrap();
        assert_eq!(s.w, vec![2.0, -2.0]);
        let before = s.grids().to_vec();
        for _ in 0..5 {
            parq_step(&mut s, &[0.0, 0.0], 0.1, 4.0, &group).unwrap();
            assert_eq!(s.grids(), &before[..]);
        }
        assert!(parq_step(&mut s, &[0.0, 0.0], 0.1, 0.5, &group).is_err());
    }

    #[test]
    fn binaryrelax_examples() {
        let group = flat(2, BitWidth::Bits(1));
        let run = |relax: f64| {
            let mut s = OptimizerState::new(vec![1.0, -3.0]);
            binaryrelax_step(&mut s, &[0.0, 0.0], 0.1, relax, &group).unwrap();
            s.w
        };
        assert_eq!(run(0.0), vec![1.0, -3.0]);
        assert_eq!(run(1.0), vec![1.5, -2.5]);
        assert_eq!(run(f64::INFINITY), vec![2.0, -2.0]);
    }

    #[test]
    fn per_row_grids() {
        let group = ParamGroup::new(
            "m",
            Shape::Matrix { rows: 2, cols: 2 },
            Granularity::PerRow,
            BitWidth::Bits(1),
            true,
        )
        .unwrap();
        let mut s = OptimizerState::new(vec![1.0, -3.0, 0.5, 0.5]);
        parq_step(&mut s, &[0.0; 4], 0.1, f64::INFINITY, &group).unwrap();
        assert_eq!(s.grids().len(), 2);
        assert_eq!(s.w, vec![2.0, -2.0, 0.5, 0.5]);
        assert!(ParamGroup::new(
            "f",
            Shape::Flat(4),
            Granularity::PerRow,
            BitWidth::Bits(1),
            true
        )
        .is_err());
    }

    #[test]
    fn grid_refresh_cadence() {
        let group = flat(2, BitWidth::Bits(1));
        let opts = StepOptions {
            grid_refresh_every: 3,
            ..StepOptions::default()
        };
        let mut s = OptimizerState::new(vec![1.0, -1.0])
            .with_options(opts)
            .unwrap();
        parq_step(&mut s, &[-1.0, 1.0], 1.0, 2.0, &group).unwrap();
        assert_eq!(s.grids()[0].values(), &[-2.0, 2.0]);
        parq_step(&mut s, &[-1.0, 1.0], 1.0, 2.0, &group).unwrap();
        parq_step(&mut s, &[-1.0, 1.0], 1.0, 2.0, &group).unwrap();
        assert_eq!(s.grids()[0].values(), &[-2.0, 2.0]);
        parq_step(&mut s, &[-1.0, 1.0], 1.0, 2.0, &group).unwrap();
        assert_eq!(s.grids()[0].values(), &[-5.0, 5.0]);
    }

    #[test]
    fn momentum_and_weight_decay() {
        let opts = StepOptions {
            momentum: 0.5,
            ..StepOptions::default()
        };
        let mut s = OptimizerState::new(vec![0.0]).with_options(opts).unwrap();
        sgd_step(&mut s, &[1.0], 1.0).unwrap();
        sgd_step(&mut s, &[1.0], 1.0).unwrap();
        assert_eq!(s.w, vec![-2.5]);

        let coupled = StepOptions {
            weight_decay: 0.5,
            ..StepOptions::default()
        };
        let mut s = OptimizerState::new(vec![2.0])
            .with_options(coupled)
            .unwrap();
        sgd_step(&mut s, &[0.0], 0.5).unwrap();
        assert_eq!(s.w, vec![1.5]);

        let decoupled = StepOptions {
            weight_decay: 0.5,
            decoupled_weight_decay: true,
            ..StepOptions::default()
        };
        let g = grid(&[-1.0, 1.0]);
        let mut s = OptimizerState::new(vec![2.0])
            .with_options(decoupled)
            .unwrap();
        binaryconnect_step(&mut s, &[1.0], 0.5, &g).unwrap();
        assert_eq!(s.u, vec![2.0 * 0.75 - 0.5]);
        assert!(StepOptions {
            momentum: 1.0,
            ..StepOptions::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn averages() {
        let mut s = OptimizerState::new(vec![3.0]);
        assert!(s.average_iterate().is_err());
        sgd_step(&mut s, &[1.0], 0.5).unwrap();
        assert_eq!(s.average_iterate().unwrap(), vec![3.0]);

        let mut s = OptimizerState::new(vec![1.0]);
        for k in 0..6 {
            let g = if k % 2 == 0 { 2.0 } else { -2.0 };
            sgd_step(&mut s, &[g], 1.0).unwrap();
        }
        assert_eq!(s.average_iterate().unwrap(), vec![0.0]);

        let mut s = OptimizerState::new(vec![1.0]);
        sgd_step(&mut s, &[-3.0], 1.0).unwrap();
        assert_eq!(s.average_including_current(2.0), vec![3.0]);
        sgd_step(&mut s, &[0.0], 2.0).unwrap();
        assert_eq!(s.average_iterate().unwrap(), vec![3.0]);
    }

    #[test]
    fn gamma_is_sum_of_steps() {
        let sched = StepSchedule::InverseSqrt { base: 0.3 };
        let prox = ProxOperator::Par(ternary_reg());
        let mut s = OptimizerState::new(vec![0.0; 3]);
        let mut exact = 0.0;
        for t in 1..=1000 {
            let eta = sched.eta(t).unwrap();
            exact += eta;
            aprox_step(&mut s, &[0.1, -0.2, 0.3], eta, &prox).unwrap();
        }
        assert!((s.gamma - exact).abs() <= 1000.0 * f64::EPSILON * 0.3);
    }

    #[test]
    fn step_schedules() {
        let inv = StepSchedule::InverseSqrt { base: 0.4 };
        assert_eq!(inv.eta(4).unwrap(), 0.2);
        assert!(inv.eta(0).is_err());
        let multi = StepSchedule::Multistep {
            base: 0.1,
            milestones: vec![80, 120, 150],
            decay: 0.1,
        };
        assert_eq!(multi.eta(79).unwrap(), 0.1);
        assert!((multi.eta(80).unwrap() - 0.01).abs() < 1e-15);
        assert!((multi.eta(150).unwrap() - 1e-4).abs() < 1e-15);
        let c = StepSchedule::Constant { base: 0.1 };
        assert_eq!(c.eta(12345).unwrap(), 0.1);
        assert!(StepSchedule::Constant { base: -1.0 }.validate().is_err());
    }

    #[test]
    fn step_schedule_serde() {
        let s: StepSchedule = serde_json::from_str(
            r#"{"kind":"multistep","base":0.1,"milestones":[80],"decay":0.1}"#,
        )
        .unwrap();
        assert_eq!(s.eta(81).unwrap(), 0.1 * 0.1);
        let s: StepSchedule =
            serde_json::from_str(r#"{"kind":"inverse-sqrt","base":1.0}"#).unwrap();
        assert_eq!(s.eta(4).unwrap(), 0.5);
    }

    #[test]
    fn slope_schedule_endpoints() {
        let cos = SlopeSchedule::new(SlopeKind::Cosine, 1000, 0.93).unwrap();
        assert!(cos.inv_slope(1).unwrap() > 0.9999);
        assert_eq!(cos.inv_slope(930).unwrap(), 0.0);
        assert_eq!(cos.inv_slope(1000).unwrap(), 0.0);
        assert_eq!(cos.slope(1000).unwrap(), f64::INFINITY);
        assert!(cos.inv_slope(0).is_err());
        assert!(cos.inv_slope(1001).is_err());

        let sig = SlopeSchedule::new(SlopeKind::Sigmoid { steepness: 50.0 }, 1000, 0.5).unwrap();
        assert!((sig.inv_slope(250).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(sig.inv_slope(500).unwrap(), 0.0);

        let one = SlopeSchedule::new(SlopeKind::ConstantOne, 10, 0.93).unwrap();
        assert_eq!(one.slope(10).unwrap(), 1.0);
        let hard = SlopeSchedule::new(SlopeKind::Hard, 10, 0.93).unwrap();
        assert_eq!(hard.slope(1).unwrap(), f64::INFINITY);
        assert!(SlopeSchedule::new(SlopeKind::Cosine, 10, 0.0).is_err());
    }

    #[test]
    fn slope_schedules_are_nonincreasing() {
        for kind in [
            SlopeKind::Cosine,
            SlopeKind::Sigmoid { steepness: 50.0 },
            SlopeKind::Sigmoid { steepness: 4.0 },
        ] {
            let s = SlopeSchedule::new(kind, 300, 0.93).unwrap();
            let values: Vec<f64> = (1..=300).map(|t| s.inv_slope(t).unwrap()).collect();
            assert!(values.windows(2).all(|p| p[1] <= p[0]), "{kind:?}");
            assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
            // reaches zero at ⌈0.93 T⌉ = 279
            assert!(values[277] > 0.0);
            assert_eq!(values[278], 0.0);
        }
    }
}
