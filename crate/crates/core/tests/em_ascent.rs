mod common;

use netinf::em::{em_fit, BudgetMode, ConvergenceOpts, InitSpec, Penalties};
use netinf::model::{random_sparse_params, simulate, Dims};
use proptest::prelude::*;

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn penalized_em_never_decreases_loglik(
        seed in 0u64..1_000,
        p in 2usize..7,
        k in 1usize..3,
        fraction in 0.05f64..0.95,
    ) {
        let dims = Dims::new(p, k, 8, 6).unwrap();
        let truth = random_sparse_params(&dims, 0.3, 0.6, seed).unwrap();
        let (data, _) = simulate(&truth, &dims, seed + 1).unwrap();
        let opts = ConvergenceOpts { rel_tol: 1e-9, max_iter: 60, inner_sweeps: 1 };
        for pen in [
            Penalties::new(fraction, fraction, fraction, fraction, BudgetMode::Fraction).unwrap(),
            Penalties::absolute(1.0, 2.0, 0.5, 0.5).unwrap(),
            Penalties::unconstrained(),
        ] {
            let fit = em_fit(&data, &dims, &pen, &InitSpec::DataDriven, &opts).unwrap();
            prop_assert!(monotone(&fit.loglik_trace), "{:?}", fit.loglik_trace);
        }
    }
}

#[test]
fn random_init_is_reproducible() {
    let dims = Dims::new(4, 2, 8, 5).unwrap();
    let truth = random_sparse_params(&dims, 0.3, 0.6, 3).unwrap();
    let (data, _) = simulate(&truth, &dims, 4).unwrap();
    let opts = ConvergenceOpts { rel_tol: 1e-8, max_iter: 50, inner_sweeps: 1 };
    let pen = Penalties::fraction(0.5, 0.5, 0.5, 0.5).unwrap();
    let a = em_fit(&data, &dims, &pen, &InitSpec::Random { seed: 9 }, &opts).unwrap();
    let b = em_fit(&data, &dims, &pen, &InitSpec::Random { seed: 9 }, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unconstrained_fit_beats_truth_loglik_approximately() {
    // With ample data the unpenalized MLE scores at least as well as the truth.
    let dims = Dims::new(3, 1, 10, 40).unwrap();
    let truth = random_sparse_params(&dims, 0.6, 0.6, 21).unwrap();
    let (data, _) = simulate(&truth, &dims, 22).unwrap();
    let opts = ConvergenceOpts { rel_tol: 1e-10, max_iter: 3000, inner_sweeps: 1 };
    let fit = em_fit(&data, &dims, &Penalties::unconstrained(), &InitSpec::DataDriven, &opts).unwrap();
    let truth_ll = netinf::kalman::observed_loglik(&truth, &data).unwrap();
    assert!(fit.final_loglik() >= truth_ll - 1.0, "{} vs {truth_ll}", fit.final_loglik());
}

#[test]
fn f32_fit_runs_at_loose_tolerance() {
    let dims = Dims::new(3, 1, 6, 5).unwrap();
    let truth = random_sparse_params::<f32>(&dims, 0.5, 0.5, 1).unwrap();
    let (data, _) = simulate(&truth, &dims, 2).unwrap();
    let opts = ConvergenceOpts { rel_tol: 1e-4f32, max_iter: 100, inner_sweeps: 1 };
    let pen = Penalties::fraction(0.5f32, 0.5, 0.5, 0.5).unwrap();
    let fit = em_fit(&data, &dims, &pen, &InitSpec::DataDriven, &opts).unwrap();
    assert!(fit.final_loglik().is_finite());
    // Ascent up to single-precision rounding.
    let scale = fit.final_loglik().abs();
    assert!(fit.loglik_trace.windows(2).all(|w| w[1] >= w[0] - 1e-4 * scale));
}
