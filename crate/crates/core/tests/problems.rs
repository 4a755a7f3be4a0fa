use parq_core::problems::{logistic_problem, mlp_problem, Problem, RngSpec};

/// Per-coordinate z-scores of the mean of `n` stochastic gradients against the full gradient.
fn z_scores(p: &dyn Problem, w: &[f64], n: u64) -> Vec<f64> {
    let d = p.dim();
    let (mut sum, mut sq) = (vec![0.0; d], vec![0.0; d]);
    for s in 0..n {
        let g = p.stochastic_grad(w, s);
        for i in 0..d {
            sum[i] += g[i];
            sq[i] += g[i] * g[i];
        }
    }
    let full = p.full_grad(w);
    let nf = n as f64;
    (0..d)
        .map(|i| {
            let mean = sum[i] / nf;
            let var = (sq[i] / nf - mean * mean).max(0.0);
            let se = (var / nf).sqrt();
            if se == 0.0 {
                (mean - full[i]).abs() / 1e-12
            } else {
                (mean - full[i]).abs() / se
            }
        })
        .collect()
}

#[test]
fn logistic_minibatch_gradient_is_unbiased() {
    let p = logistic_problem(64, 5, 1.5, RngSpec::new(21, 0)).unwrap();
    let w = p.initial_point(3);
    let z = z_scores(&p, &w, 100_000);
    assert!(z.iter().all(|x| *x <= 3.0), "{z:?}");
}

#[test]
fn mlp_minibatch_gradient_is_unbiased() {
    let p = mlp_problem(4, 64, RngSpec::new(5, 0)).unwrap();
    let w = p.initial_point(1);
    let z = z_scores(&p, &w, 100_000);
    assert!(z.iter().all(|x| *x <= 3.0), "{z:?}");
}

#[test]
fn central_differences_match_gradients() {
    let problems: Vec<Box<dyn Problem>> = vec![
        Box::new(logistic_problem(40, 3, 1.0, RngSpec::new(2, 0)).unwrap()),
        Box::new(mlp_problem(5, 40, RngSpec::new(2, 0)).unwrap()),
    ];
    for p in &problems {
        for seed in 0..3 {
            let w = p.initial_point(seed);
            let g = p.full_grad(&w);
            for i in 0..w.len() {
                let h = 1e-6;
                let (mut a, mut b) = (w.clone(), w.clone());
                a[i] += h;
                b[i] -= h;
                let fd = (p.full_loss(&a) - p.full_loss(&b)) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1e-3);
                assert!(rel <= 1e-5, "{} coord {i}: fd {fd} grad {}", p.name(), g[i]);
            }
        }
    }
}
