//! Quantization-aware training lab: the piecewise-affine regularizer and its
//! proximal map, AProx, PARQ with least-squares binary quantization, the
//! usual baselines, and an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod lsbq;
pub mod optim;
pub mod par;
pub mod problems;
pub mod quantgrid;

pub use error::{Error, Result};
pub use lsbq::{lsbq, lsbq_1bit, lsbq_greedy, lsbq_ternary, BitWidth, ScaleVector};
pub use optim::{
    aprox_step, binaryconnect_step, binaryrelax_step, parq_step, prox_sgd_step, sgd_step,
    Granularity, OptimizerState, ParamGroup, Shape, SlopeKind, SlopeSchedule, StepOptions,
    StepSchedule,
};
pub use par::{prox_binaryrelax, prox_parq, ParRegularizer, ProxOperator};
pub use quantgrid::{hard_quantize, quantized_fraction, QuantGrid};
