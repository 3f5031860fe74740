use ncmap::bench::{self, DriftSpec, VerifyConfig};
use ncmap::oracle::{classify_pair, dyadic_grid, residual_order_with_drift};
use ncmap::{make_quadratic, pair_simple, pair_sincos, run, GeneratingPair, OptimizerConfig, StepMethod};
use proptest::prelude::*;

#[test]
fn wrong_drift_fails_the_order_check() {
    // Euler with the simple pair does not follow -grad J; far from the
    // minimizer the residual against it only shrinks like h.
    let mut cfg = VerifyConfig::parse(bench::preset("verify").unwrap()).unwrap();
    cfg.cases.truncate(1);
    cfg.cases[0].drift = DriftSpec::NegGradient;
    cfg.dims = vec![1];
    cfg.offset = 6.0;
    let tmp = tempfile::tempdir().unwrap();
    let report = bench::run_verify(&cfg, tmp.path()).unwrap();
    let rows = &report.verify.unwrap().order;
    assert!(rows.iter().filter(|r| r.point.is_some()).any(|r| !r.passed));
    assert_ne!(report.outcome, bench::Outcome::Pass);

    let mut obj = make_quadratic(&[2.0], 6.0).unwrap();
    let x = [0.5];
    let fit = residual_order_with_drift(&pair_simple(), StepMethod::Euler, &mut obj, &x, &dyadic_grid(2, 9), &[3.0]).unwrap();
    assert!(fit.slope < 1.2, "slope {}", fit.slope);
}

#[test]
fn builtin_pair_flags_match_measurement() {
    for pair in [pair_simple(), pair_sincos()] {
        assert_eq!(classify_pair(&pair).unwrap(), pair.validity(), "{}", pair.label());
    }
    let scaled = GeneratingPair::custom("scaled", |j| 2.0 * j.sin(), |j| 0.5 * j.cos()).unwrap();
    assert!(scaled.validity().valid_for_heun);
    let bad = GeneratingPair::custom("bad", |j| j, |j| j).unwrap();
    assert!(!bad.validity().valid_for_heun && !bad.validity().valid_for_euler);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // y_K telescopes to the mean of the last 4n iterates, with x0 standing in
    // for iterates before the start.
    #[test]
    fn filter_is_window_mean(
        n in 1usize..4,
        steps in 1usize..60,
        h in 0.01f64..0.5,
        heun in any::<bool>(),
        x0 in prop::collection::vec(-1.0f64..4.0, 3),
    ) {
        let method = if heun { StepMethod::Heun } else { StepMethod::Euler };
        let x0 = x0[..n].to_vec();
        let mut obj = make_quadratic(&vec![2.0; n], 6.0).unwrap();
        let cfg = OptimizerConfig::new(method, pair_sincos(), h, x0.clone(), steps);
        let traj = run(&mut obj, &cfg).unwrap();
        let w = 4 * n;
        for (i, y) in traj.y.iter().enumerate() {
            for c in 0..n {
                let mean = (0..w)
                    .map(|j| if i + 1 + j >= w { traj.x[i + 1 + j - w][c] } else { x0[c] })
                    .sum::<f64>() / w as f64;
                prop_assert!((y[c] - mean).abs() <= 1e-10, "k={i} c={c}: {} vs {mean}", y[c]);
            }
        }
    }

    #[test]
    fn evals_grow_by_method_rate(n in 1usize..4, steps in 1usize..50, heun in any::<bool>()) {
        let method = if heun { StepMethod::Heun } else { StepMethod::Euler };
        let mut obj = make_quadratic(&vec![2.0; n], 6.0).unwrap();
        let traj = run(&mut obj, &OptimizerConfig::new(method, pair_sincos(), 0.1, vec![0.5; n], steps)).unwrap();
        for (k, e) in traj.k.iter().zip(&traj.evals) {
            prop_assert_eq!(*e, method.evals_per_step() * *k as u64);
        }
    }
}
