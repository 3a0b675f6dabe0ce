mod common;

use common::{cd_constrained, data_matrix_lars, kkt_violation, random_spd, rng};
use nalgebra::{DMatrix, DVector};
use netinf::lars::{coefs_at_budget, default_max_knots, lars_path, max_quadratic_l1, QuadProblem};
use proptest::prelude::*;

fn problem(seed: u64, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut r = rng(seed);
    let s = random_spd(&mut r, n, 0.1);
    let b = common::gauss_vector(&mut r, n);
    (s, b)
}

#[test]
fn matches_coordinate_descent_at_several_budgets() {
    for seed in 0..40u64 {
        let n = 1 + (seed % 8) as usize;
        let (s, b) = problem(seed, n);
        let prob = QuadProblem::new(s.clone(), b.clone()).unwrap();
        let free_norm = s.clone().cholesky().unwrap().solve(&b).lp_norm(1);
        for frac in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let budget = frac * free_norm;
            let x = max_quadratic_l1(&prob, budget).unwrap();
            let oracle = cd_constrained(&s, &b, budget, 1e-10);
            assert!((&x - &oracle).amax() < 1e-6, "seed {seed} frac {frac}");
            assert!(kkt_violation(&s, &b, &x, budget) < 1e-6, "seed {seed} frac {frac}");
        }
    }
}

#[test]
fn gram_path_equals_data_matrix_path() {
    for seed in 100..120u64 {
        let n = 2 + (seed % 6) as usize;
        let (s, b) = problem(seed, n);
        // S = C'C with C upper triangular; response C S⁻¹ b = C⁻ᵀ b.
        let c = s.clone().cholesky().unwrap().l().transpose();
        let y = c.transpose().solve_lower_triangular(&b).unwrap();
        let reference = data_matrix_lars(&c, &y);
        let path = lars_path(&QuadProblem::new(s, b).unwrap(), default_max_knots(n)).unwrap();
        assert_eq!(path.knots.len(), reference.len(), "seed {seed}");
        for (knot, r) in path.knots.iter().zip(&reference) {
            assert!((&knot.coef - r).amax() < 1e-8, "seed {seed}");
        }
    }
}

#[test]
fn scaling_the_problem_scales_the_path() {
    let (s, b) = problem(7, 5);
    let base = lars_path(&QuadProblem::new(s.clone(), b.clone()).unwrap(), 100).unwrap();
    // (cS, cb) has the same maximizer set; the path knots coincide.
    let scaled = lars_path(&QuadProblem::new(&s * 3.0, &b * 3.0).unwrap(), 100).unwrap();
    assert_eq!(base.knots.len(), scaled.knots.len());
    for (a, c) in base.knots.iter().zip(&scaled.knots) {
        assert!((&a.coef - &c.coef).amax() < 1e-10);
    }
}

#[test]
fn budget_zero_and_saturation() {
    let (s, b) = problem(3, 4);
    let prob = QuadProblem::new(s.clone(), b.clone()).unwrap();
    assert_eq!(max_quadratic_l1(&prob, 0.0).unwrap(), DVector::zeros(4));
    let free = s.cholesky().unwrap().solve(&b);
    let x = max_quadratic_l1(&prob, 1e6).unwrap();
    assert!((x - free).amax() < 1e-10);
}

#[test]
fn objective_matches_projected_gradient() {
    let (s, b) = problem(21, 5);
    let prob = QuadProblem::new(s.clone(), b.clone()).unwrap();
    let budget = 0.7 * s.clone().cholesky().unwrap().solve(&b).lp_norm(1);
    let x = max_quadratic_l1(&prob, budget).unwrap();

    // Ascent on 2b'x - x'Sx with step 1/(2‖S‖₂), then projection.
    let step = 0.5 / s.clone().symmetric_eigen().eigenvalues.max();
    let mut v = DVector::zeros(5);
    for _ in 0..100_000 {
        let grad = (&b - &s * &v) * 2.0;
        v = common::project_l1(&(&v + grad * step), budget);
    }
    assert!((prob.objective(&x) - prob.objective(&v)).abs() < 1e-6);
    assert!(prob.objective(&x) >= prob.objective(&v) - 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_invariants(seed in 0u64..10_000, n in 1usize..7) {
        let (s, b) = problem(seed, n);
        let prob = QuadProblem::new(s.clone(), b.clone()).unwrap();
        let path = lars_path(&prob, default_max_knots(n)).unwrap();
        prop_assert!(path.complete);
        prop_assert_eq!(path.knots[0].coef.clone(), DVector::zeros(n));
        for w in path.knots.windows(2) {
            prop_assert!(w[1].l1_norm > w[0].l1_norm);
            prop_assert!(w[1].lambda <= w[0].lambda + 1e-10);
            // Interior knots satisfy the KKT conditions at their own norm.
            prop_assert!(kkt_violation(&s, &b, &w[1].coef, w[1].l1_norm) < 1e-8);
        }
        let free = s.clone().cholesky().unwrap().solve(&b);
        prop_assert!((&path.last().coef - &free).amax() < 1e-8);
        // Objective grows with the budget.
        let mut prev = f64::NEG_INFINITY;
        for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let x = coefs_at_budget(&path, frac * path.saturated_norm()).unwrap();
            let obj = prob.objective(&x);
            prop_assert!(obj >= prev - 1e-10);
            prev = obj;
        }
    }
}
