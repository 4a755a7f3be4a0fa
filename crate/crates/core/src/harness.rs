//! Seeded experiment runner, CSV traces and convergence diagnostics.
//!
//! A run executes `T − 1` updates. The record for step `t` describes the
//! iterate `w^t` (so `w^1` is the initial point and `w^T` the output) and the
//! step size `η_t` that pairs with it.
//!
//! Per-seed CSV columns, in order:
//!
//! | column              | meaning                                                        |
//! |---------------------|----------------------------------------------------------------|
//! | `step`              | `t`                                                            |
//! | `train_loss`        | full training loss at `w^t`                                    |
//! | `eval_metric`       | held-out accuracy (classifiers) or loss                        |
//! | `objective_gap`     | `F_λ(w^t) − F⋆` when an optimum oracle exists, else `NaN`      |
//! | `quantized_fraction`| share of quantized coordinates within `quant_tol` of their grid|
//! | `gamma`             | `Σ_{s<t} η_s`, the aggregate step that produced `w^t`          |
//! | `eta`               | `η_t`                                                          |
//! | `inv_slope`         | `ρ_t⁻¹` for PARQ/BinaryRelax, else `NaN`                       |
//! | `bound_value`       | `G R (2 + 1.5 ln t)/√t` when `G` and `R` are known, else `NaN` |
//! | `q_values`          | positive grid values of the first quantized slice, `;`-joined  |
//!
//! Floats use the shortest round-trip decimal form, so identical runs give
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsbq::BitWidth;
use crate::optim::{
    aprox_step, binaryconnect_step, binaryrelax_step, lsbq_binaryconnect_step, parq_step,
    prox_sgd_step, sgd_step, Granularity, OptimizerState, ParamGroup, Shape, SlopeKind,
    SlopeSchedule, StepOptions, StepSchedule, DEFAULT_SATURATION_FRACTION,
};
use crate::par::{ParRegularizer, ProxOperator};
use crate::problems::{
    estimate_gradient_bound, logistic_problem, mlp_problem_with, quadratic_problem,
    regularized_optimum, sample_seed, MlpOptions, Problem, RngSpec,
};
use crate::quantgrid::QuantGrid;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the worker count for the seed pool.
pub const WORKERS_ENV: &str = "PARQ_LAB_WORKERS";

pub const CSV_HEADER: [&str; 10] = [
    "step",
    "train_loss",
    "eval_metric",
    "objective_gap",
    "quantized_fraction",
    "gamma",
    "eta",
    "inv_slope",
    "bound_value",
    "q_values",
];

/// Numeric columns aggregated in `summary.csv`.
pub const SUMMARY_COLUMNS: [&str; 8] = [
    "train_loss",
    "eval_metric",
    "objective_gap",
    "quantized_fraction",
    "gamma",
    "eta",
    "inv_slope",
    "bound_value",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        c: Vec<f64>,
        #[serde(default)]
        sigma: f64,
    },
    Logistic {
        n_samples: usize,
        dim: usize,
        separation: f64,
        #[serde(default)]
        data_seed: u64,
        #[serde(default = "default_logistic_batch")]
        batch_size: usize,
    },
    Mlp {
        hidden_width: usize,
        n_samples: usize,
        #[serde(default)]
        data_seed: u64,
        #[serde(default = "default_input_dim")]
        input_dim: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default = "default_mlp_batch")]
        batch_size: usize,
        #[serde(default)]
        quantize_output: bool,
        #[serde(default = "default_init_scale")]
        init_scale: f64,
    },
}

fn default_logistic_batch() -> usize {
    crate::problems::DEFAULT_BATCH_SIZE
}
fn default_input_dim() -> usize {
    MlpOptions::default().input_dim
}
fn default_noise() -> f64 {
    MlpOptions::default().noise
}
fn default_mlp_batch() -> usize {
    MlpOptions::default().batch_size
}
fn default_init_scale() -> f64 {
    MlpOptions::default().init_scale
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn Problem>> {
        Ok(match self {
            ProblemSpec::Quadratic { c, sigma } => Box::new(quadratic_problem(c.clone(), *sigma)?),
            ProblemSpec::Logistic {
                n_samples,
                dim,
                separation,
                data_seed,
                batch_size,
            } => Box::new(
                logistic_problem(*n_samples, *dim, *separation, RngSpec::new(*data_seed, 0))?
                    .with_batch_size(*batch_size)?,
            ),
            ProblemSpec::Mlp {
                hidden_width,
                n_samples,
                data_seed,
                input_dim,
                noise,
                batch_size,
                quantize_output,
                init_scale,
            } => Box::new(mlp_problem_with(
                *hidden_width,
                *n_samples,
                RngSpec::new(*data_seed, 0),
                MlpOptions {
                    input_dim: *input_dim,
                    noise: *noise,
                    batch_size: *batch_size,
                    quantize_output: *quantize_output,
                    init_scale: *init_scale,
                },
            )?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    ProxSgd,
    Aprox,
    Binaryconnect,
    Parq,
    Binaryrelax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegularizerSpec {
    /// PAR with explicit breakpoints and slopes.
    Par {
        q: Vec<f64>,
        a: Vec<f64>,
        lambda: f64,
    },
    /// PAR whose aggregate prox tends to hard quantization onto `grid`.
    ParGrid { grid: Vec<f64>, lambda: f64 },
    /// Indicator of a fixed grid; its prox is hard quantization.
    Indicator { grid: Vec<f64> },
}

impl RegularizerSpec {
    fn par(&self) -> Result<Option<ParRegularizer>> {
        Ok(match self {
            RegularizerSpec::Par { q, a, lambda } => {
                Some(ParRegularizer::new(q.clone(), a.clone(), *lambda)?)
            }
            RegularizerSpec::ParGrid { grid, lambda } => Some(ParRegularizer::from_grid(
                &QuantGrid::from_unsorted(grid.clone())?,
                *lambda,
            )?),
            RegularizerSpec::Indicator { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepScheduleSpec {
    Constant {
        base: f64,
    },
    InverseSqrt {
        base: f64,
    },
    Multistep {
        base: f64,
        milestones: Vec<usize>,
        decay: f64,
    },
    /// `η_t = (R / 2G) / √t` with the run's `G` and `R`.
    Theorem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlopeKindName {
    Cosine,
    Sigmoid,
    ConstantOne,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeScheduleSpec {
    pub kind: SlopeKindName,
    /// Sigmoid steepness `k`; ignored by the other kinds.
    #[serde(default = "default_steepness")]
    pub steepness: f64,
    #[serde(default = "default_saturation")]
    pub saturation_fraction: f64,
}

impl SlopeScheduleSpec {
    pub fn slope_kind(&self) -> SlopeKind {
        match self.kind {
            SlopeKindName::Cosine => SlopeKind::Cosine,
            SlopeKindName::Sigmoid => SlopeKind::Sigmoid {
                steepness: self.steepness,
            },
            SlopeKindName::ConstantOne => SlopeKind::ConstantOne,
            SlopeKindName::Hard => SlopeKind::Hard,
        }
    }
}

fn default_steepness() -> f64 {
    50.0
}

fn default_saturation() -> f64 {
    DEFAULT_SATURATION_FRACTION
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    #[serde(rename = "G")]
    pub g: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
}

fn default_bits() -> BitWidth {
    BitWidth::Bits(1)
}

fn default_quant_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub regularizer: Option<RegularizerSpec>,
    #[serde(default = "default_bits")]
    pub bits: BitWidth,
    #[serde(default)]
    pub granularity: Granularity,
    pub step_schedule: StepScheduleSpec,
    #[serde(default)]
    pub slope_schedule: Option<SlopeScheduleSpec>,
    /// `T`: the run produces `w^1, …, w^T`.
    pub steps: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub eval_every: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub options: StepOptions,
    #[serde(default)]
    pub bound: Option<BoundSpec>,
    #[serde(default = "default_quant_tol")]
    pub quant_tol: f64,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            serde_json::to_value(self.optimizer)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        })
    }

    pub fn eval_every(&self) -> usize {
        self.eval_every.unwrap_or((self.steps / 300).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.steps < 1 {
            return Err(config_err("steps must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds must be non-empty"));
        }
        if self.eval_every == Some(0) {
            return Err(config_err("eval_every must be >= 1"));
        }
        if !(self.quant_tol >= 0.0) {
            return Err(config_err("quant_tol must be nonnegative"));
        }
        self.bits
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.options
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        use OptimizerKind::*;
        let reg = self.regularizer.as_ref();
        match self.optimizer {
            ProxSgd => {
                if !matches!(
                    reg,
                    Some(RegularizerSpec::Par { .. } | RegularizerSpec::ParGrid { .. })
                ) {
                    return Err(config_err("prox-sgd needs a par or par-grid regularizer"));
                }
            }
            Aprox => {
                if reg.is_none() {
                    return Err(config_err("aprox needs a regularizer"));
                }
            }
            Binaryconnect => {
                if matches!(
                    reg,
                    Some(RegularizerSpec::Par { .. } | RegularizerSpec::ParGrid { .. })
                ) {
                    return Err(config_err(
                        "binaryconnect takes an indicator grid or none (LSBQ grid)",
                    ));
                }
            }
            Parq | Binaryrelax => {
                if reg.is_some() {
                    return Err(config_err(
                        "parq and binaryrelax estimate their grid by LSBQ; drop the regularizer",
                    ));
                }
                if self.slope_schedule.is_none() {
                    return Err(config_err("parq and binaryrelax need a slope_schedule"));
                }
            }
            Sgd => {}
        }
        if let Some(r) = reg {
            r.par().map_err(|e| config_err(e.to_string()))?;
            if let RegularizerSpec::Indicator { grid } = r {
                QuantGrid::from_unsorted(grid.clone()).map_err(|e| config_err(e.to_string()))?;
            }
        }
        if let Some(s) = self.slope_schedule {
            SlopeSchedule::new(s.slope_kind(), self.steps, s.saturation_fraction)
                .map_err(|e| config_err(e.to_string()))?;
        }
        self.problem
            .build()
            .map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }
}

/// One logged row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub train_loss: f64,
    pub eval_metric: f64,
    pub objective_gap: f64,
    pub quantized_fraction: f64,
    pub gamma: f64,
    pub eta: f64,
    pub inv_slope: f64,
    pub bound_value: f64,
    pub q_values: Vec<f64>,
    /// `F_λ(w̄^t) − F⋆` for the weighted average iterate; not written to CSV.
    pub average_gap: f64,
    /// Largest grid value averaged over all quantized slices; not written to CSV.
    pub q_max_mean: f64,
}

impl TraceRecord {
    pub fn column(&self, name: &str) -> f64 {
        match name {
            "step" => self.step as f64,
            "train_loss" => self.train_loss,
            "eval_metric" => self.eval_metric,
            "objective_gap" => self.objective_gap,
            "quantized_fraction" => self.quantized_fraction,
            "gamma" => self.gamma,
            "eta" => self.eta,
            "inv_slope" => self.inv_slope,
            "bound_value" => self.bound_value,
            "average_gap" => self.average_gap,
            "q_max_mean" => self.q_max_mean,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedTrace {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    /// Step at which a non-finite loss or gradient stopped the run.
    pub diverged_at: Option<usize>,
    /// Final iterate `w^T` (or the iterate at divergence).
    pub final_w: Vec<f64>,
    /// Final grids per quantized slice.
    pub final_grids: Vec<QuantGrid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub traces: Vec<SeedTrace>,
    /// `(G, R)` used for `bound_value` and the theorem step size.
    pub bound_params: Option<(f64, f64)>,
    /// `F⋆` when an optimum oracle exists.
    pub optimum_value: Option<f64>,
}

impl RunOutput {
    /// Errors on the first seed whose run hit a non-finite loss.
    pub fn check_finite(&self) -> Result<()> {
        for tr in &self.traces {
            if let Some(step) = tr.diverged_at {
                return Err(Error::NonFiniteLoss {
                    step,
                    seed: tr.seed,
                });
            }
        }
        Ok(())
    }
}

pub fn bound_value(g: f64, r: f64, t: usize) -> f64 {
    let t = t as f64;
    g * r * (2.0 + 1.5 * t.ln()) / t.sqrt()
}

enum Method {
    Sgd,
    ProxSgd(ParRegularizer),
    Aprox(ProxOperator),
    FixedBinaryConnect(QuantGrid),
    LsbqBinaryConnect,
    Parq(SlopeSchedule),
    BinaryRelax(SlopeSchedule),
}

struct Plan {
    problem: Box<dyn Problem>,
    groups: Vec<ParamGroup>,
    offsets: Vec<usize>,
    method: Method,
    par: Option<ParRegularizer>,
    fixed_grid: Option<QuantGrid>,
    schedule: StepSchedule,
    optimum: Option<(Vec<f64>, f64)>,
    bound: Option<(f64, f64)>,
}

impl Plan {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let problem = cfg.problem.build()?;
        let quantizing = cfg.optimizer != OptimizerKind::Sgd || cfg.regularizer.is_some();
        let mut groups = Vec::new();
        let mut offsets = vec![0];
        for layout in problem.layout() {
            let granularity = match layout.shape {
                Shape::Matrix { .. } => cfg.granularity,
                Shape::Flat(_) => Granularity::PerTensor,
            };
            offsets.push(offsets.last().unwrap() + layout.shape.len());
            groups.push(ParamGroup::new(
                layout.name,
                layout.shape,
                granularity,
                cfg.bits,
                layout.quantizable && quantizing,
            )?);
        }
        let par = cfg
            .regularizer
            .as_ref()
            .map(|r| r.par())
            .transpose()?
            .flatten();
        let fixed_grid = match &cfg.regularizer {
            Some(RegularizerSpec::Indicator { grid }) => {
                Some(QuantGrid::from_unsorted(grid.clone())?)
            }
            _ => par.as_ref().map(|r| r.grid()),
        };
        let slope = |s: &SlopeScheduleSpec| {
            SlopeSchedule::new(s.slope_kind(), cfg.steps, s.saturation_fraction)
        };
        let method = match cfg.optimizer {
            OptimizerKind::Sgd => Method::Sgd,
            OptimizerKind::ProxSgd => Method::ProxSgd(par.clone().expect("validated")),
            OptimizerKind::Aprox => Method::Aprox(match &par {
                Some(r) => ProxOperator::Par(r.clone()),
                None => ProxOperator::Hard(fixed_grid.clone().expect("validated")),
            }),
            OptimizerKind::Binaryconnect => match &fixed_grid {
                Some(g) => Method::FixedBinaryConnect(g.clone()),
                None => Method::LsbqBinaryConnect,
            },
            OptimizerKind::Parq => Method::Parq(slope(&cfg.slope_schedule.expect("validated"))?),
            OptimizerKind::Binaryrelax => {
                Method::BinaryRelax(slope(&cfg.slope_schedule.expect("validated"))?)
            }
        };

        let quantized: Vec<usize> = (0..groups.len()).filter(|i| groups[*i].quantize).collect();
        let optimum = if problem.quadratic_center().is_some() || problem.dim() <= 2 {
            // the regularizer enters F_λ only when every coordinate carries it
            let reg_for_oracle = if quantized.len() == groups.len() {
                par.as_ref()
            } else {
                None
            };
            regularized_optimum(problem.as_ref(), reg_for_oracle).ok()
        } else {
            None
        };

        let bound = match (cfg.bound.unwrap_or_default(), &optimum) {
            (
                BoundSpec {
                    g: Some(g),
                    r: Some(r),
                },
                _,
            ) => Some((g, r)),
            (spec, Some((w_star, _))) => {
                let w0 = problem.initial_point(cfg.seeds[0]);
                let r = spec.r.unwrap_or_else(|| {
                    w0.iter()
                        .zip(w_star)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                });
                let g = match spec.g {
                    Some(g) => g,
                    None => {
                        let radius = par.as_ref().map_or_else(
                            || {
                                w_star
                                    .iter()
                                    .chain(&w0)
                                    .fold(1.0_f64, |m, x| m.max(x.abs() + 1.0))
                            },
                            |p| p.q_max(),
                        );
                        estimate_gradient_bound(problem.as_ref(), par.as_ref(), radius, 1000, 0)
                    }
                };
                Some((g, r))
            }
            _ => None,
        };

        let schedule = match &cfg.step_schedule {
            StepScheduleSpec::Constant { base } => StepSchedule::Constant { base: *base },
            StepScheduleSpec::InverseSqrt { base } => StepSchedule::InverseSqrt { base: *base },
            StepScheduleSpec::Multistep {
                base,
                milestones,
                decay,
            } => StepSchedule::Multistep {
                base: *base,
                milestones: milestones.clone(),
                decay: *decay,
            },
            StepScheduleSpec::Theorem => {
                let (g, r) = bound.ok_or_else(|| {
                    config_err("theorem step size needs G and R (bound spec or optimum oracle)")
                })?;
                StepSchedule::InverseSqrt {
                    base: r / (2.0 * g),
                }
            }
        };
        schedule.validate().map_err(|e| config_err(e.to_string()))?;

        Ok(Self {
            problem,
            groups,
            offsets,
            method,
            par,
            fixed_grid,
            schedule,
            optimum,
            bound,
        })
    }

    fn objective(&self, w: &[f64]) -> f64 {
        let mut f = self.problem.full_loss(w);
        if let Some(reg) = &self.par {
            for (i, g) in self.groups.iter().enumerate() {
                if g.quantize {
                    f += reg.eval(&w[self.offsets[i]..self.offsets[i + 1]]);
                }
            }
        }
        f
    }

    fn inv_slope(&self, t: usize) -> Result<f64> {
        match &self.method {
            Method::Parq(s) | Method::BinaryRelax(s) => s.inv_slope(t),
            _ => Ok(f64::NAN),
        }
    }
}

struct Runner<'a> {
    plan: &'a Plan,
    states: Vec<OptimizerState>,
    tol: f64,
}

impl Runner<'_> {
    fn w(&self) -> Vec<f64> {
        self.states
            .iter()
            .flat_map(|s| s.w.iter().copied())
            .collect()
    }

    fn average_with(&self, eta: f64) -> Vec<f64> {
        self.states
            .iter()
            .flat_map(|s| s.average_including_current(eta))
            .collect()
    }

    /// Grids of every quantized slice, in order.
    fn grids(&self) -> Vec<(std::ops::Range<usize>, usize, QuantGrid)> {
        let mut out = Vec::new();
        for (gi, (group, state)) in self.plan.groups.iter().zip(&self.states).enumerate() {
            if !group.quantize {
                continue;
            }
            match &self.plan.fixed_grid {
                Some(g) if !matches!(self.plan.method, Method::LsbqBinaryConnect) => {
                    out.push((0..group.len(), gi, g.clone()));
                }
                _ => {
                    for (r, g) in group.slices().into_iter().zip(state.grids()) {
                        out.push((r, gi, g.clone()));
                    }
                }
            }
        }
        out
    }

    fn step(&mut self, grad: &[f64], t: usize, eta: f64) -> Result<()> {
        let plan = self.plan;
        for (i, (group, state)) in plan.groups.iter().zip(self.states.iter_mut()).enumerate() {
            let g = &grad[plan.offsets[i]..plan.offsets[i + 1]];
            if !group.quantize {
                sgd_step(state, g, eta)?;
                continue;
            }
            match &plan.method {
                Method::Sgd => sgd_step(state, g, eta)?,
                Method::ProxSgd(reg) => prox_sgd_step(state, g, eta, reg)?,
                Method::Aprox(op) => aprox_step(state, g, eta, op)?,
                Method::FixedBinaryConnect(grid) => binaryconnect_step(state, g, eta, grid)?,
                Method::LsbqBinaryConnect => lsbq_binaryconnect_step(state, g, eta, group)?,
                Method::Parq(s) => parq_step(state, g, eta, s.slope(t)?, group)?,
                Method::BinaryRelax(s) => {
                    binaryrelax_step(state, g, eta, s.slope(t)? - 1.0, group)?
                }
            }
        }
        Ok(())
    }

    fn record(&self, t: usize, eta: f64) -> Result<TraceRecord> {
        let plan = self.plan;
        let w = self.w();
        let train_loss = plan.problem.full_loss(&w);
        let (objective_gap, average_gap) = match &plan.optimum {
            Some((_, f_star)) => (
                plan.objective(&w) - f_star,
                plan.objective(&self.average_with(eta)) - f_star,
            ),
            None => (f64::NAN, f64::NAN),
        };
        let grids = self.grids();
        let (mut hits, mut total) = (0usize, 0usize);
        for (range, gi, grid) in &grids {
            let state = &self.states[*gi];
            for x in &state.w[range.clone()] {
                total += 1;
                if (grid.nearest(*x) - x).abs() <= self.tol {
                    hits += 1;
                }
            }
        }
        let quantized_fraction = if total == 0 {
            f64::NAN
        } else {
            hits as f64 / total as f64
        };
        let q_values = grids
            .first()
            .map(|(_, _, g)| g.positive_values())
            .unwrap_or_default();
        let q_max_mean = if grids.is_empty() {
            f64::NAN
        } else {
            grids.iter().map(|(_, _, g)| g.max_abs()).sum::<f64>() / grids.len() as f64
        };
        let gamma = self.states.first().map_or(0.0, |s| s.gamma);
        Ok(TraceRecord {
            step: t,
            train_loss,
            eval_metric: plan.problem.eval_metric(&w),
            objective_gap,
            quantized_fraction,
            gamma,
            eta,
            inv_slope: plan.inv_slope(t)?,
            bound_value: plan.bound.map_or(f64::NAN, |(g, r)| bound_value(g, r, t)),
            q_values,
            average_gap,
            q_max_mean,
        })
    }
}

fn run_seed(plan: &Plan, cfg: &ExperimentConfig, seed: u64) -> Result<SeedTrace> {
    let w0 = plan.problem.initial_point(seed);
    let states = plan
        .groups
        .iter()
        .enumerate()
        .map(|(i, _)| {
            OptimizerState::new(w0[plan.offsets[i]..plan.offsets[i + 1]].to_vec())
                .with_options(cfg.options)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runner = Runner {
        plan,
        states,
        tol: cfg.quant_tol,
    };
    let every = cfg.eval_every();
    let mut records = Vec::new();
    let mut diverged_at = None;
    for t in 1..=cfg.steps {
        let eta = plan.schedule.eta(t)?;
        if t % every == 0 || t == cfg.steps {
            let rec = runner.record(t, eta)?;
            let bad = !rec.train_loss.is_finite();
            records.push(rec);
            if bad {
                diverged_at = Some(t);
                break;
            }
        }
        if t == cfg.steps {
            break;
        }
        let w = runner.w();
        let grad = plan.problem.stochastic_grad(&w, sample_seed(seed, t));
        if grad.iter().any(|g| !g.is_finite()) {
            records.push(runner.record(t, eta)?);
            diverged_at = Some(t);
            break;
        }
        runner.step(&grad, t, eta)?;
    }
    let final_grids = runner.grids().into_iter().map(|(_, _, g)| g).collect();
    Ok(SeedTrace {
        seed,
        records,
        diverged_at,
        final_w: runner.w(),
        final_grids,
    })
}

fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n >= 1)
}

/// Runs every seed of `cfg` (in parallel) and returns the traces in seed order.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let plan = Plan::new(cfg)?;
    let work = || {
        cfg.seeds
            .par_iter()
            .map(|s| run_seed(&plan, cfg, *s))
            .collect::<Result<Vec<_>>>()
    };
    let traces = match worker_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| config_err(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(RunOutput {
        config: cfg.clone(),
        traces,
        bound_params: plan.bound,
        optimum_value: plan.optimum.as_ref().map(|(_, f)| *f),
    })
}

/// Runs serially, seed by seed; results match [`run`] exactly.
pub fn run_serial(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let plan = Plan::new(cfg)?;
    let traces = cfg
        .seeds
        .iter()
        .map(|s| run_seed(&plan, cfg, *s))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput {
        config: cfg.clone(),
        traces,
        bound_params: plan.bound,
        optimum_value: plan.optimum.as_ref().map(|(_, f)| *f),
    })
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err(path))
}

pub fn write_trace_csv(trace: &SeedTrace, path: &Path) -> Result<()> {
    let mut wtr = csv_writer(path)?;
    wtr.write_record(CSV_HEADER).map_err(csv_err(path))?;
    for r in &trace.records {
        let q = r
            .q_values
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(";");
        wtr.write_record([
            r.step.to_string(),
            fmt_f64(r.train_loss),
            fmt_f64(r.eval_metric),
            fmt_f64(r.objective_gap),
            fmt_f64(r.quantized_fraction),
            fmt_f64(r.gamma),
            fmt_f64(r.eta),
            fmt_f64(r.inv_slope),
            fmt_f64(r.bound_value),
            q,
        ])
        .map_err(csv_err(path))?;
    }
    wtr.flush().map_err(io_err(path))
}

/// Reads a per-seed CSV back. The in-memory-only fields come back as `NaN`.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(config_err(format!(
            "{} does not have the trace header",
            path.display()
        )));
    }
    let bad = |what: &str| config_err(format!("{}: bad {what} value", path.display()));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        let num =
            |i: usize| -> Result<f64> { row[i].parse::<f64>().map_err(|_| bad(CSV_HEADER[i])) };
        let q_values = if row[9].is_empty() {
            Vec::new()
        } else {
            row[9]
                .split(';')
                .map(|v| v.parse::<f64>().map_err(|_| bad("q_values")))
                .collect::<Result<_>>()?
        };
        out.push(TraceRecord {
            step: row[0].parse().map_err(|_| bad("step"))?,
            train_loss: num(1)?,
            eval_metric: num(2)?,
            objective_gap: num(3)?,
            quantized_fraction: num(4)?,
            gamma: num(5)?,
            eta: num(6)?,
            inv_slope: num(7)?,
            bound_value: num(8)?,
            q_max_mean: q_values.iter().copied().fold(f64::NAN, f64::max),
            q_values,
            average_gap: f64::NAN,
        });
    }
    Ok(out)
}

/// Mean, sample standard deviation and standard error.
pub fn mean_std_stderr(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    (mean, std, std / n.sqrt())
}

/// Row of `summary.csv`: the step, seed count and `(mean, std, stderr)` per
/// column of [`SUMMARY_COLUMNS`].
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub step: usize,
    pub n_seeds: usize,
    pub stats: Vec<(f64, f64, f64)>,
}

/// Aggregates records sharing a step across traces.
pub fn summarize(traces: &[Vec<TraceRecord>]) -> Vec<SummaryRow> {
    let Some(longest) = traces.iter().max_by_key(|t| t.len()) else {
        return Vec::new();
    };
    longest
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let rows: Vec<&TraceRecord> = traces
                .iter()
                .filter_map(|t| t.get(i).filter(|r| r.step == rec.step))
                .collect();
            let stats = SUMMARY_COLUMNS
                .iter()
                .map(|c| {
                    let xs: Vec<f64> = rows.iter().map(|r| r.column(c)).collect();
                    mean_std_stderr(&xs)
                })
                .collect();
            SummaryRow {
                step: rec.step,
                n_seeds: rows.len(),
                stats,
            }
        })
        .collect()
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut wtr = csv_writer(path)?;
    let mut header = vec!["step".to_string(), "n_seeds".to_string()];
    for c in SUMMARY_COLUMNS {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_std"));
        header.push(format!("{c}_stderr"));
    }
    wtr.write_record(&header).map_err(csv_err(path))?;
    for r in rows {
        let mut fields = vec![r.step.to_string(), r.n_seeds.to_string()];
        for (m, s, e) in &r.stats {
            fields.extend([fmt_f64(*m), fmt_f64(*s), fmt_f64(*e)]);
        }
        wtr.write_record(&fields).map_err(csv_err(path))?;
    }
    wtr.flush().map_err(io_err(path))
}

pub fn seed_file_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

/// Writes `seed_<s>.csv` per seed and `summary.csv` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::new();
    for tr in &out.traces {
        let p = dir.join(seed_file_name(tr.seed));
        write_trace_csv(tr, &p)?;
        paths.push(p);
    }
    let records: Vec<Vec<TraceRecord>> = out.traces.iter().map(|t| t.records.clone()).collect();
    let p = dir.join("summary.csv");
    write_summary_csv(&summarize(&records), &p)?;
    paths.push(p);
    Ok(paths)
}

/// Runs `cfg`, writes its files to `dir` (or the config's `output`), and
/// then reports divergence, so diagnostic records reach disk.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<RunOutput> {
    let dir = dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| config_err("no output directory given"))?;
    let out = run(cfg)?;
    write_outputs(&out, &dir)?;
    out.check_finite()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub step: usize,
    pub mean_gap: f64,
    pub stderr: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub n_seeds: usize,
    pub g: f64,
    pub r: f64,
    pub rows: Vec<BoundRow>,
    /// Steps `t >= 10` where the seed-mean gap exceeds the bound.
    pub violations: Vec<usize>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn min_margin(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.step >= MIN_BOUND_STEP)
            .map(|r| r.margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv_writer(path)?;
        wtr.write_record(["step", "mean_gap", "stderr", "bound", "margin", "violation"])
            .map_err(csv_err(path))?;
        for r in &self.rows {
            let flag = (r.step >= MIN_BOUND_STEP && r.margin < 0.0) as u8;
            wtr.write_record([
                r.step.to_string(),
                fmt_f64(r.mean_gap),
                fmt_f64(r.stderr),
                fmt_f64(r.bound),
                fmt_f64(r.margin),
                flag.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
        wtr.flush().map_err(io_err(path))
    }
}

pub const MIN_BOUND_STEP: usize = 10;

/// Which gap column to test against the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapKind {
    LastIterate,
    Average,
}

/// Compares the seed-mean gap with `G R (2 + 1.5 ln t)/√t` at every logged step.
pub fn check_bound(
    traces: &[Vec<TraceRecord>],
    g: f64,
    r: f64,
    kind: GapKind,
) -> Result<BoundReport> {
    if traces.is_empty() {
        return Err(config_err("no traces to check"));
    }
    let col = match kind {
        GapKind::LastIterate => "objective_gap",
        GapKind::Average => "average_gap",
    };
    let longest = traces.iter().max_by_key(|t| t.len()).expect("non-empty");
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (i, rec) in longest.iter().enumerate() {
        let xs: Vec<f64> = traces
            .iter()
            .filter_map(|t| t.get(i).filter(|x| x.step == rec.step))
            .map(|x| x.column(col))
            .collect();
        if xs.iter().any(|x| x.is_nan()) {
            return Err(Error::Unsupported(format!(
                "{col} is unavailable at step {}: no optimum oracle",
                rec.step
            )));
        }
        let (mean, _, stderr) = mean_std_stderr(&xs);
        let bound = bound_value(g, r, rec.step);
        let margin = bound - mean;
        if rec.step >= MIN_BOUND_STEP && !(margin >= 0.0) {
            violations.push(rec.step);
        }
        rows.push(BoundRow {
            step: rec.step,
            mean_gap: mean,
            stderr,
            bound,
            margin,
        });
    }
    Ok(BoundReport {
        n_seeds: traces.len(),
        g,
        r,
        rows,
        violations,
    })
}

/// Loads traces for [`check_bound`] from a CSV file or a directory of
/// `seed_*.csv` files.
pub fn load_traces(path: &Path) -> Result<Vec<Vec<TraceRecord>>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seed_") && n.ends_with(".csv"))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(config_err(format!(
                "no seed_*.csv files in {}",
                path.display()
            )));
        }
        files.iter().map(|p| read_trace_csv(p)).collect()
    } else {
        Ok(vec![read_trace_csv(path)?])
    }
}

/// Sign summary of the mean first difference of a series over its thirds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendSummary {
    pub first_third: f64,
    pub middle_third: f64,
    pub last_third: f64,
}

impl TrendSummary {
    pub fn of(series: &[f64]) -> Self {
        let diffs: Vec<f64> = series.windows(2).map(|p| p[1] - p[0]).collect();
        let n = diffs.len();
        let mean = |s: &[f64]| {
            if s.is_empty() {
                f64::NAN
            } else {
                s.iter().sum::<f64>() / s.len() as f64
            }
        };
        Self {
            first_third: mean(&diffs[..n / 3]),
            middle_third: mean(&diffs[n / 3..2 * n / 3]),
            last_third: mean(&diffs[2 * n / 3..]),
        }
    }

    /// Rising over the first third and falling over the last.
    pub fn expands_then_contracts(&self) -> bool {
        self.first_third > 0.0 && self.last_third < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub label: String,
    pub optimizer: OptimizerKind,
    pub steps: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub eval_metric: Vec<f64>,
    pub quantized_fraction: Vec<f64>,
    pub inv_slope: Vec<f64>,
    pub q_max: Vec<f64>,
    pub final_eval_metric: f64,
}

impl MethodSummary {
    fn from_run(out: &RunOutput) -> Self {
        let records: Vec<Vec<TraceRecord>> = out.traces.iter().map(|t| t.records.clone()).collect();
        let steps: Vec<usize> = records[0].iter().map(|r| r.step).collect();
        let mean_col = |c: &str| -> Vec<f64> {
            (0..steps.len())
                .map(|i| {
                    let xs: Vec<f64> = records
                        .iter()
                        .filter_map(|t| t.get(i))
                        .map(|r| r.column(c))
                        .collect();
                    mean_std_stderr(&xs).0
                })
                .collect()
        };
        let eval_metric = mean_col("eval_metric");
        Self {
            label: out.config.label(),
            optimizer: out.config.optimizer,
            final_eval_metric: *eval_metric.last().unwrap_or(&f64::NAN),
            train_loss: mean_col("train_loss"),
            quantized_fraction: mean_col("quantized_fraction"),
            inv_slope: mean_col("inv_slope"),
            q_max: mean_col("q_max_mean"),
            eval_metric,
            steps,
        }
    }

    pub fn grid_trend(&self) -> TrendSummary {
        TrendSummary::of(&self.q_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub methods: Vec<MethodSummary>,
    pub runs: Vec<RunOutput>,
}

/// Inverse slopes at or above this count as the clipped-identity phase.
pub const EARLY_PHASE_INV_SLOPE: f64 = 0.99;

impl Comparison {
    /// Index of the full-precision baseline: SGD without regularizer.
    pub fn baseline(&self) -> Option<usize> {
        self.runs.iter().position(|r| {
            r.config.optimizer == OptimizerKind::Sgd && r.config.regularizer.is_none()
        })
    }

    /// Largest relative train-loss deviation from the baseline over records
    /// where the method's inverse slope is at least [`EARLY_PHASE_INV_SLOPE`].
    pub fn early_loss_deviation(&self, method: usize) -> Option<f64> {
        let base = &self.methods[self.baseline()?];
        let m = &self.methods[method];
        let devs: Vec<f64> = (0..m.steps.len())
            .filter(|i| m.inv_slope[*i] >= EARLY_PHASE_INV_SLOPE)
            .map(|i| (m.train_loss[i] - base.train_loss[i]).abs() / base.train_loss[i])
            .collect();
        if devs.is_empty() {
            None
        } else {
            Some(devs.into_iter().fold(0.0, f64::max))
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv_writer(path)?;
        let cols = [
            "train_loss",
            "eval_metric",
            "quantized_fraction",
            "inv_slope",
            "q_max",
        ];
        let mut header = vec!["step".to_string()];
        for m in &self.methods {
            for c in cols {
                header.push(format!("{}.{c}", m.label));
            }
        }
        wtr.write_record(&header).map_err(csv_err(path))?;
        for i in 0..self.methods[0].steps.len() {
            let mut row = vec![self.methods[0].steps[i].to_string()];
            for m in &self.methods {
                for v in [
                    m.train_loss[i],
                    m.eval_metric[i],
                    m.quantized_fraction[i],
                    m.inv_slope[i],
                    m.q_max[i],
                ] {
                    row.push(fmt_f64(v));
                }
            }
            wtr.write_record(&row).map_err(csv_err(path))?;
        }
        wtr.flush().map_err(io_err(path))
    }

    /// Human-readable digest: final metrics, quantized fractions, grid trends
    /// and early-phase deviations.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for (i, m) in self.methods.iter().enumerate() {
            let trend = m.grid_trend();
            s.push_str(&format!(
                "{}: final eval_metric {:.4}, final quantized_fraction {}, grid trend {:+.3e}/{:+.3e}/{:+.3e}",
                m.label,
                m.final_eval_metric,
                m.quantized_fraction.last().copied().unwrap_or(f64::NAN),
                trend.first_third,
                trend.middle_third,
                trend.last_third,
            ));
            if let Some(d) = self
                .early_loss_deviation(i)
                .filter(|_| Some(i) != self.baseline())
            {
                s.push_str(&format!(", early loss deviation vs FP {:.2}%", 100.0 * d));
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every config and aligns their seed-mean traces.
pub fn compare_methods(configs: &[ExperimentConfig]) -> Result<Comparison> {
    let first = configs
        .first()
        .ok_or_else(|| config_err("compare needs at least one config"))?;
    for c in configs {
        if c.problem != first.problem {
            return Err(config_err(format!(
                "config {} uses a different problem",
                c.label()
            )));
        }
        if c.steps != first.steps || c.eval_every() != first.eval_every() {
            return Err(config_err(format!(
                "config {} uses different steps or eval_every",
                c.label()
            )));
        }
    }
    let runs = configs.iter().map(run).collect::<Result<Vec<_>>>()?;
    for r in &runs {
        r.check_finite()?;
    }
    let methods = runs.iter().map(MethodSummary::from_run).collect();
    Ok(Comparison { methods, runs })
}
