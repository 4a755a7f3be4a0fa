mod common;

use parq_core::harness::{run, ExperimentConfig};
use parq_core::optim::{lsbq_binaryconnect_step, ParamGroup, Shape};
use parq_core::problems::{logistic_problem, quadratic_problem, sample_seed, Problem, RngSpec};
use parq_core::{
    aprox_step, binaryconnect_step, parq_step, BitWidth, Granularity, OptimizerState,
    ParRegularizer, ProxOperator, QuantGrid,
};
use proptest::prelude::*;

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[test]
fn harness_aprox_takes_gradients_at_w() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "schema_version": 1,
            "problem": {"kind": "quadratic", "c": [0.8, -1.1, 0.2], "sigma": 0.5},
            "optimizer": "aprox",
            "regularizer": {"kind": "par", "q": [0, 0.5, 1.0], "a": [0.2, 0.6], "lambda": 0.5},
            "step_schedule": {"kind": "constant", "base": 0.05},
            "steps": 300,
            "seeds": [5]
        }"#,
    )
    .unwrap();
    let out = run(&cfg).unwrap();

    let problem = quadratic_problem(vec![0.8, -1.1, 0.2], 0.5).unwrap();
    let reg = ParRegularizer::new(vec![0.0, 0.5, 1.0], vec![0.2, 0.6], 0.5).unwrap();
    let op = ProxOperator::Par(reg);
    let mut st = OptimizerState::new(problem.initial_point(5));
    for t in 1..300 {
        let g = problem.stochastic_grad(&st.w, sample_seed(5, t));
        aprox_step(&mut st, &g, 0.05, &op).unwrap();
    }
    assert!(bits_eq(&st.w, &out.traces[0].final_w));
    assert_eq!(out.traces[0].records.last().unwrap().gamma, st.gamma);
}

#[test]
fn harness_binaryconnect_matches_manual_loop() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "schema_version": 1,
            "problem": {"kind": "logistic", "n_samples": 120, "dim": 4, "separation": 2.0, "data_seed": 9},
            "optimizer": "binaryconnect",
            "regularizer": {"kind": "indicator", "grid": [-1, -0.5, 0.5, 1]},
            "step_schedule": {"kind": "inverse-sqrt", "base": 0.3},
            "steps": 500,
            "seeds": [2]
        }"#,
    )
    .unwrap();
    let out = run(&cfg).unwrap();
    let problem = logistic_problem(120, 4, 2.0, RngSpec::new(9, 0)).unwrap();
    let grid = QuantGrid::new(vec![-1.0, -0.5, 0.5, 1.0]).unwrap();
    let mut st = OptimizerState::new(problem.initial_point(2));
    for t in 1..500 {
        let g = problem.stochastic_grad(&st.w, sample_seed(2, t));
        binaryconnect_step(&mut st, &g, 0.3 / (t as f64).sqrt(), &grid).unwrap();
    }
    assert!(bits_eq(&st.w, &out.traces[0].final_w));
}

#[test]
fn aprox_and_binaryconnect_agree_on_mlp() {
    let cfg = |opt: &str, reg: &str| {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "schema_version": 1,
                "problem": {{"kind": "mlp", "hidden_width": 6, "n_samples": 80, "data_seed": 4}},
                "optimizer": "{opt}",
                "regularizer": {reg},
                "step_schedule": {{"kind": "constant", "base": 0.2}},
                "steps": 400,
                "seeds": [1, 2]
            }}"#
        ))
        .unwrap()
    };
    let grid = r#"{"kind": "indicator", "grid": [-0.6, -0.2, 0.2, 0.6]}"#;
    let a = run(&cfg("aprox", grid)).unwrap();
    let b = run(&cfg("binaryconnect", grid)).unwrap();
    for (x, y) in a.traces.iter().zip(&b.traces) {
        assert!(bits_eq(&x.final_w, &y.final_w));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hard_parq_phase_stays_on_grid(seed in any::<u64>(), rows in 1usize..4, cols in 2usize..8, per_row in any::<bool>(), bits in 1u32..4) {
        let mut rng = common::rng(seed);
        let shape = Shape::Matrix { rows, cols };
        let gran = if per_row { Granularity::PerRow } else { Granularity::PerTensor };
        let group = ParamGroup::new("w", shape, gran, BitWidth::Bits(bits), true).unwrap();
        let mut st = OptimizerState::new(common::gaussian_vec(&mut rng, rows * cols, 1.0));
        for t in 0..30 {
            let g = common::gaussian_vec(&mut rng, rows * cols, 0.3);
            let slope = if t < 10 { 1.0 + t as f64 } else { f64::INFINITY };
            parq_step(&mut st, &g, 0.1, slope, &group).unwrap();
            if t >= 10 {
                for (r, grid) in group.slices().into_iter().zip(st.grids()) {
                    for x in &st.w[r] {
                        prop_assert!(grid.values().contains(x), "{x} not in {:?}", grid.values());
                    }
                }
            }
        }
    }

    #[test]
    fn lsbq_binaryconnect_is_hard_parq(seed in any::<u64>(), n in 2usize..12, bits in 1u32..4) {
        let mut rng = common::rng(seed);
        let group = ParamGroup::new("w", Shape::Flat(n), Granularity::PerTensor, BitWidth::Bits(bits), true).unwrap();
        let w0 = common::gaussian_vec(&mut rng, n, 1.0);
        let mut a = OptimizerState::new(w0.clone());
        let mut b = OptimizerState::new(w0);
        for _ in 0..20 {
            let g = common::gaussian_vec(&mut rng, n, 0.5);
            parq_step(&mut a, &g, 0.05, f64::INFINITY, &group).unwrap();
            lsbq_binaryconnect_step(&mut b, &g, 0.05, &group).unwrap();
            prop_assert!(bits_eq(&a.w, &b.w));
        }
    }
}
