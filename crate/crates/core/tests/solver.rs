mod common;

use ndarray::{array, Array2};
use proptest::prelude::*;

use common::{lasso_objective, lasso_oracle, random_instance};
use pgdebias::lasso::{
    kkt_violation, solve_lasso, solve_nonneg_lasso, solve_scaled_lasso, ScaledObjective,
    SolverOptions,
};
use pgdebias::rng::rng_from_seed;

fn instance(seed: u64) -> (Array2<f64>, Vec<f64>, f64) {
    random_instance(&mut rng_from_seed(seed), 12, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_sign_enumeration(seed in any::<u64>()) {
        let (a, y, lambda) = instance(seed);
        let opts = SolverOptions::default();
        let fit = solve_lasso(&a, &y, lambda, &opts).unwrap();
        let (_, f_star) = lasso_oracle(&a, &y, lambda, false);
        let f = lasso_objective(&a, &y, &fit.x_hat, lambda);
        prop_assert!((f - f_star).abs() <= 1e-8 * f_star.max(1.0), "{f} vs {f_star}");
        prop_assert!(fit.kkt_ok(&opts));
        prop_assert!(kkt_violation(&a, &y, &fit.x_hat, lambda, false) <= opts.kkt_tol * lambda.max(1.0));
    }

    #[test]
    fn nonneg_matches_enumeration(seed in any::<u64>()) {
        let (a, y, lambda) = instance(seed);
        let opts = SolverOptions::default();
        let fit = solve_nonneg_lasso(&a, &y, lambda, &opts).unwrap();
        prop_assert!(fit.x_hat.iter().all(|&v| v >= 0.0));
        let (_, f_star) = lasso_oracle(&a, &y, lambda, true);
        let f = lasso_objective(&a, &y, &fit.x_hat, lambda);
        prop_assert!((f - f_star).abs() <= 1e-8 * f_star.max(1.0), "{f} vs {f_star}");
    }

    #[test]
    fn scale_equivariance(seed in any::<u64>(), c in 0.05f64..20.0) {
        let (a, y, lambda) = instance(seed);
        let opts = SolverOptions { tol: 1e-12, coord_tol: 1e-13, ..SolverOptions::default() };
        let x1 = solve_lasso(&a, &y, lambda, &opts).unwrap().x_hat;
        let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
        let x2 = solve_lasso(&a, &cy, c * lambda, &opts).unwrap().x_hat;
        let norm = x1.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (u, v) in x1.iter().zip(&x2) {
            prop_assert!((c * u - v).abs() <= 1e-5 * c * norm, "{u} {v} {c}");
        }
    }

    #[test]
    fn objective_trace_is_monotone(seed in any::<u64>()) {
        let (a, y, lambda) = instance(seed);
        let opts = SolverOptions { trace: true, ..SolverOptions::default() };
        let fit = solve_lasso(&a, &y, lambda, &opts).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }
}

#[test]
fn nonneg_least_squares_hand_case() {
    // min ½‖y − Ax‖² over x ≥ 0; the unconstrained solution has a negative
    // third coordinate, so the constrained optimum is the fit on the first two.
    let a = array![
        [1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [1.0, 1.0, 0.0],
        [0.0, 0.0, 1.0]
    ];
    let y = [1.0, 2.0, 3.0, -1.0];
    let opts = SolverOptions {
        tol: 1e-14,
        coord_tol: 1e-14,
        ..SolverOptions::default()
    };
    let fit = solve_nonneg_lasso(&a, &y, 1e-12, &opts).unwrap();
    let (x_star, _) = lasso_oracle(&a, &y, 1e-12, true);
    assert_eq!(x_star[2], 0.0);
    for (u, v) in fit.x_hat.iter().zip(&x_star) {
        assert!((u - v).abs() < 1e-8, "{:?} vs {x_star:?}", fit.x_hat);
    }
    // Normal equations on the support {0, 1}: [[2,1],[1,2]] x = [4,5].
    assert!((x_star[0] - 1.0).abs() < 1e-10 && (x_star[1] - 2.0).abs() < 1e-10);
}

#[test]
fn scaled_lasso_identity_design_recovers_sigma() {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let n = 4000;
    let sigma = 1.5;
    let mut rng = rng_from_seed(31);
    let a = Array2::<f64>::eye(n);
    let mut y: Vec<f64> = (0..n)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    for v in y.iter_mut().take(10) {
        *v += 50.0;
    }
    let opts = SolverOptions {
        scaled_objective: ScaledObjective::Classical,
        ..SolverOptions::default()
    };
    // With an orthonormal design the penalty nσλ must exceed σ·√(2 log n) to
    // threshold the noise, so λ = √(2 log n)/n up to a small margin.
    let lambda = 1.1 * (2.0 * (n as f64).ln()).sqrt() / n as f64;
    let fit = solve_scaled_lasso(&a, &y, lambda, &opts).unwrap();
    assert!(fit.converged);
    let rel = (fit.sigma_hat / sigma - 1.0).abs();
    assert!(rel < 0.25, "sigma_hat {}", fit.sigma_hat);
    assert!(fit.x_hat[..10].iter().all(|&v| v > 40.0));
}
