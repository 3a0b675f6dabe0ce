mod common;

use nalgebra::{DMatrix, DVector};
use netinf::model::{observation_count, param_count, random_sparse_params, simulate, Dims, ModelParams};
use proptest::prelude::*;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn empirical_cov(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples.len() as f64;
    let dim = samples[0].len();
    let mean = samples.iter().fold(DVector::zeros(dim), |acc, s| acc + s) / n;
    samples
        .iter()
        .fold(DMatrix::zeros(dim, dim), |acc, s| acc + (s - &mean) * (s - &mean).transpose())
        / (n - 1.0)
}

#[test]
fn late_observations_reach_the_steady_state_covariance() {
    let f = 0.7;
    let z = DMatrix::from_column_slice(2, 1, &[1.0, 0.5]);
    let params = ModelParams::new(scalar(f), DMatrix::zeros(1, 2), z.clone(), DMatrix::zeros(2, 2), scalar(1.0)).unwrap();
    // Fixed point of Π = FΠF' + 1 by iteration.
    let mut pi = 0.0;
    for _ in 0..10_000 {
        pi = f * pi * f + 1.0;
    }
    let expected = &z * pi * z.transpose() + DMatrix::identity(2, 2);

    let dims = Dims::new(2, 1, 30, 100_000).unwrap();
    let (data, _) = simulate(&params, &dims, 77).unwrap();
    let last: Vec<DVector<f64>> = data.replicates().iter().map(|s| s[29].clone()).collect();
    let cov = empirical_cov(&last);
    for i in 0..2 {
        for j in 0..2 {
            let rel = (cov[(i, j)] - expected[(i, j)]).abs() / expected[(i, j)].abs();
            assert!(rel < 0.05, "entry ({i},{j}): {} vs {}", cov[(i, j)], expected[(i, j)]);
        }
    }
}

#[test]
fn observation_covariance_matches_joint_construction() {
    let params = ModelParams::new(scalar(0.5), scalar(0.4), scalar(0.9), scalar(-0.3), scalar(2.0)).unwrap();
    let t_len = 3;
    let sigma = common::joint_covariance(&params, t_len);
    let n_theta = (t_len + 1) * params.k();
    let expected = sigma.view((n_theta, n_theta), (t_len, t_len)).into_owned();

    let dims = Dims::new(1, 1, t_len, 100_000).unwrap();
    let (data, _) = simulate(&params, &dims, 5).unwrap();
    let stacked: Vec<DVector<f64>> = data
        .replicates()
        .iter()
        .map(|s| DVector::from_iterator(t_len, s.iter().map(|y| y[0])))
        .collect();
    let cov = empirical_cov(&stacked);
    assert!((&cov - &expected).amax() < 0.05 * expected.amax(), "{cov} vs {expected}");
}

#[test]
fn sparse_generator_density_is_binomial() {
    let dims = Dims::new(10, 10, 2, 1).unwrap();
    let params: ModelParams<f64> = random_sparse_params(&dims, 0.01, 1.0, 2024).unwrap();
    let nonzero = [&params.f, &params.a, &params.z, &params.b]
        .iter()
        .map(|m| m.iter().filter(|v| **v != 0.0).count())
        .sum::<usize>();
    // 99% central interval of Binomial(400, 0.01) from the exact pmf.
    let n = 400u32;
    let q = 0.01f64;
    let mut cdf = 0.0;
    let mut pmf = (1.0 - q).powi(n as i32);
    let (mut lo, mut hi) = (None, None);
    for x in 0..=n {
        if x > 0 {
            pmf *= (n - x + 1) as f64 / x as f64 * q / (1.0 - q);
        }
        cdf += pmf;
        if lo.is_none() && cdf >= 0.005 {
            lo = Some(x as usize);
        }
        if hi.is_none() && cdf >= 0.995 {
            hi = Some(x as usize);
        }
    }
    let (lo, hi) = (lo.unwrap(), hi.unwrap());
    assert!((lo..=hi).contains(&nonzero), "{nonzero} outside [{lo}, {hi}]");
}

/// Spectral radius by repeated squaring: ρ = lim ‖G^m‖^(1/m).
fn radius_by_squaring(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut h = m / norm;
    let mut log_c = norm.ln();
    let mut power = 1.0f64;
    for _ in 0..40 {
        let sq = &h * &h;
        let n = sq.norm();
        if n == 0.0 {
            return 0.0;
        }
        log_c = 2.0 * log_c + n.ln();
        power *= 2.0;
        h = sq / n;
    }
    (log_c / power).exp()
}

#[test]
fn generated_dynamics_are_stable() {
    let dims = Dims::new(6, 10, 2, 1).unwrap();
    for seed in 0..100 {
        let params: ModelParams<f64> = random_sparse_params(&dims, 0.6, 1.0, seed).unwrap();
        let rho = radius_by_squaring(&params.f);
        assert!(rho <= 0.9 + 1e-9, "seed {seed}: {rho}");
    }
}

proptest! {
    #[test]
    fn counts_agree_with_naive_loops(p in 1usize..60, k in 1usize..10, t in 2usize..20, r in 1usize..50) {
        let dims = Dims::new(p, k, t, r).unwrap();
        let mut params = 0usize;
        for (rows, cols) in [(p, p), (p, k), (k, p), (k, k)] {
            for _ in 0..rows {
                for _ in 0..cols {
                    params += 1;
                }
            }
        }
        let mut obs = 0usize;
        for _ in 0..r {
            for _ in 0..t {
                for _ in 0..p {
                    obs += 1;
                }
            }
        }
        prop_assert_eq!(param_count(&dims), params);
        prop_assert_eq!(observation_count(&dims), obs);
    }
}
