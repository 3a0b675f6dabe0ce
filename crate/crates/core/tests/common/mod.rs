//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use netinf::model::ModelParams;
use netinf::Dataset64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gauss_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `W'W/m + δI` with a Gaussian `W` of `m = n + 2` rows.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, delta: f64) -> DMatrix<f64> {
    let m = n + 2;
    let w = gauss_matrix(rng, m, n);
    let mut s = w.transpose() * &w / m as f64;
    for i in 0..n {
        s[(i, i)] += delta;
    }
    (&s + s.transpose()) * 0.5
}

fn rescale_radius(m: &mut DMatrix<f64>, cap: f64) {
    let rho = m
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(0.0f64, f64::max);
    if rho > cap {
        *m *= cap / rho;
    }
}

/// Dense random parameters with `F` and `B` of spectral radius at most 0.8
/// and a random positive definite `Q0`.
pub fn random_stable_params(rng: &mut ChaCha8Rng, p: usize, k: usize) -> ModelParams<f64> {
    let mut f = gauss_matrix(rng, k, k) * 0.5;
    rescale_radius(&mut f, 0.8);
    let a = gauss_matrix(rng, k, p) * 0.3;
    let z = gauss_matrix(rng, p, k) * 0.7;
    let mut b = gauss_matrix(rng, p, p) * 0.3;
    rescale_radius(&mut b, 0.8);
    let q0 = random_spd(rng, k, 0.5);
    ModelParams::new(f, a, z, b, q0).unwrap()
}

/// Moments of a single replicate obtained by writing the whole trajectory
/// as one Gaussian vector and conditioning densely.
pub struct JointOracle {
    pub loglik: f64,
    /// `E[θ_t | y_{1:T}]`, t = 0..=T.
    pub smooth_mean: Vec<DVector<f64>>,
    pub smooth_cov: Vec<DMatrix<f64>>,
    /// `Cov[θ_t, θ_{t-1} | y_{1:T}]`, t = 1..=T at index t.
    pub smooth_lag1: Vec<DMatrix<f64>>,
    /// `E[θ_t | y_{1:t}]`, t = 0..=T.
    pub filt_mean: Vec<DVector<f64>>,
    pub filt_cov: Vec<DMatrix<f64>>,
}

/// Covariance of `x = (θ_0, …, θ_T, y_1, …, y_T)` obtained by writing the
/// model as `L x = e`, `e ~ N(0, D)`, so that `Σ = L⁻¹ D L⁻ᵀ`.
pub fn joint_covariance(params: &ModelParams<f64>, t_len: usize) -> DMatrix<f64> {
    let (p, k) = (params.p(), params.k());
    let n_theta = (t_len + 1) * k;
    let n = n_theta + t_len * p;
    let th = |t: usize| t * k;
    let yo = |t: usize| n_theta + (t - 1) * p; // y_t, t >= 1

    let mut l = DMatrix::<f64>::identity(n, n);
    let mut d = DMatrix::<f64>::zeros(n, n);
    d.view_mut((0, 0), (k, k)).copy_from(&params.q0);
    for t in 1..=t_len {
        l.view_mut((th(t), th(t - 1)), (k, k)).copy_from(&(-&params.f));
        if t >= 2 {
            l.view_mut((th(t), yo(t - 1)), (k, p)).copy_from(&(-&params.a));
            l.view_mut((yo(t), yo(t - 1)), (p, p)).copy_from(&(-&params.b));
        }
        l.view_mut((yo(t), th(t)), (p, k)).copy_from(&(-&params.z));
        for i in 0..k {
            d[(th(t) + i, th(t) + i)] = 1.0;
        }
        for i in 0..p {
            d[(yo(t) + i, yo(t) + i)] = 1.0;
        }
    }
    let linv = l.try_inverse().expect("unit triangular system");
    &linv * d * linv.transpose()
}

/// Conditions the θ-part of the joint Gaussian on the observed y.
pub fn joint_oracle(params: &ModelParams<f64>, y: &[DVector<f64>]) -> JointOracle {
    let (p, k) = (params.p(), params.k());
    let t_len = y.len();
    let n_theta = (t_len + 1) * k;
    let th = |t: usize| t * k;
    let sigma = joint_covariance(params, t_len);

    let y_all = DVector::from_iterator(t_len * p, y.iter().flat_map(|v| v.iter().copied()));
    let condition = |m: usize| {
        // Condition θ on y_1..y_m.
        let ny = m * p;
        let syy = sigma.view((n_theta, n_theta), (ny, ny)).into_owned();
        let sty = sigma.view((0, n_theta), (n_theta, ny)).into_owned();
        let stt = sigma.view((0, 0), (n_theta, n_theta)).into_owned();
        if ny == 0 {
            return (DVector::zeros(n_theta), stt);
        }
        let inv = syy.try_inverse().expect("observation covariance invertible");
        let yv = y_all.rows(0, ny).into_owned();
        let mean = &sty * &inv * yv;
        let cov = stt - &sty * inv * sty.transpose();
        (mean, cov)
    };

    let syy = sigma.view((n_theta, n_theta), (t_len * p, t_len * p)).into_owned();
    let det = syy.determinant();
    let inv = syy.try_inverse().unwrap();
    let quad = (y_all.transpose() * inv * &y_all)[(0, 0)];
    let loglik = -0.5 * ((t_len * p) as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad);

    let (mean, cov) = condition(t_len);
    let smooth_mean = (0..=t_len).map(|t| mean.rows(th(t), k).into_owned()).collect();
    let smooth_cov = (0..=t_len)
        .map(|t| cov.view((th(t), th(t)), (k, k)).into_owned())
        .collect();
    let mut smooth_lag1 = vec![DMatrix::zeros(k, k)];
    for t in 1..=t_len {
        smooth_lag1.push(cov.view((th(t), th(t - 1)), (k, k)).into_owned());
    }
    let mut filt_mean = Vec::new();
    let mut filt_cov = Vec::new();
    for t in 0..=t_len {
        let (m, c) = condition(t);
        filt_mean.push(m.rows(th(t), k).into_owned());
        filt_cov.push(c.view((th(t), th(t)), (k, k)).into_owned());
    }
    JointOracle { loglik, smooth_mean, smooth_cov, smooth_lag1, filt_mean, filt_cov }
}

/// Expected sufficient statistics summed directly from oracle moments.
pub struct OracleStats {
    pub s_tt: DMatrix<f64>,
    pub s_tt_lag: DMatrix<f64>,
    pub s_tt_prev: DMatrix<f64>,
    pub s_ty: DMatrix<f64>,
    pub s_ty_prev: DMatrix<f64>,
    pub s_tprev_yprev: DMatrix<f64>,
}

pub fn oracle_stats(params: &ModelParams<f64>, data: &Dataset64) -> OracleStats {
    let (p, k) = (params.p(), params.k());
    let mut st = OracleStats {
        s_tt: DMatrix::zeros(k, k),
        s_tt_lag: DMatrix::zeros(k, k),
        s_tt_prev: DMatrix::zeros(k, k),
        s_ty: DMatrix::zeros(k, p),
        s_ty_prev: DMatrix::zeros(k, p),
        s_tprev_yprev: DMatrix::zeros(k, p),
    };
    for y in data.replicates() {
        let o = joint_oracle(params, y);
        let second = |t: usize| &o.smooth_cov[t] + &o.smooth_mean[t] * o.smooth_mean[t].transpose();
        for t in 1..=y.len() {
            let y_prev = if t >= 2 { y[t - 2].clone() } else { DVector::zeros(p) };
            st.s_tt += second(t);
            st.s_tt_prev += second(t - 1);
            st.s_tt_lag += &o.smooth_lag1[t] + &o.smooth_mean[t] * o.smooth_mean[t - 1].transpose();
            st.s_ty += &o.smooth_mean[t] * y[t - 1].transpose();
            st.s_ty_prev += &o.smooth_mean[t] * y_prev.transpose();
            st.s_tprev_yprev += &o.smooth_mean[t - 1] * y_prev.transpose();
        }
    }
    st
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}

pub fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Cyclic coordinate descent for `min x'Sx - 2b'x + 2λ‖x‖₁`, run until no
/// coordinate moves by more than `tol`.
pub fn cd_penalized(s: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, tol: f64, x0: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut x = x0.clone();
    for _ in 0..1_000_000 {
        let mut max_step = 0.0f64;
        for j in 0..n {
            let mut r = b[j];
            for i in 0..n {
                if i != j {
                    r -= s[(j, i)] * x[i];
                }
            }
            let new = soft(r, lambda) / s[(j, j)];
            max_step = max_step.max((new - x[j]).abs());
            x[j] = new;
        }
        if max_step < tol {
            return x;
        }
    }
    panic!("coordinate descent did not converge");
}

/// Constrained problem `max 2b'x - x'Sx, ‖x‖₁ ≤ budget` solved by bisection
/// on the multiplier with coordinate descent inside.
pub fn cd_constrained(s: &DMatrix<f64>, b: &DVector<f64>, budget: f64, tol: f64) -> DVector<f64> {
    let n = b.len();
    let free = s.clone().cholesky().unwrap().solve(b);
    if free.lp_norm(1) <= budget {
        return free;
    }
    let (mut lo, mut hi) = (0.0, b.amax());
    let mut x = DVector::zeros(n);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        x = cd_penalized(s, b, mid, tol, &x);
        if x.lp_norm(1) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * b.amax() {
            break;
        }
    }
    cd_penalized(s, b, 0.5 * (lo + hi), tol, &x)
}

/// Largest violation of the optimality conditions of
/// `max 2b'x - x'Sx, ‖x‖₁ ≤ budget`.
pub fn kkt_violation(s: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>, budget: f64) -> f64 {
    let c = b - s * x;
    let lambda = c.amax();
    let mut worst = (x.lp_norm(1) - budget).max(0.0);
    for j in 0..x.len() {
        if x[j] != 0.0 {
            worst = worst.max((c[j] - lambda * x[j].signum()).abs());
        } else {
            worst = worst.max(c[j].abs() - lambda);
        }
    }
    // Complementary slackness.
    worst.max(lambda * (budget - x.lp_norm(1)))
}

/// Textbook LARS-lasso on a design matrix and response, tracking the fit
/// vector. Returns the coefficients at each knot, starting from zero.
pub fn data_matrix_lars(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = x.ncols();
    let mut beta = DVector::<f64>::zeros(n);
    let mut mu = DVector::<f64>::zeros(x.nrows());
    let mut knots = vec![beta.clone()];
    let mut active: Vec<usize> = Vec::new();
    let c0 = (x.transpose() * y).amax();
    let eps = 1e-11 * c0.max(1.0);
    let mut dropped: Option<usize> = None;
    for _ in 0..(8 * n + 64) {
        let c = x.transpose() * (y - &mu);
        let cmax = c.amax();
        if cmax <= eps {
            break;
        }
        if active.is_empty() {
            active.push(c.iamax());
        }
        for j in 0..n {
            if !active.contains(&j) && Some(j) != dropped && (c[j].abs() - cmax).abs() <= eps {
                active.push(j);
            }
        }
        active.sort_unstable();
        let signs: Vec<f64> = active.iter().map(|&j| c[j].signum()).collect();
        let xa = DMatrix::from_fn(x.nrows(), active.len(), |r, q| x[(r, active[q])] * signs[q]);
        let ga_inv = (xa.transpose() * &xa).try_inverse().unwrap();
        let ones = DVector::from_element(active.len(), 1.0);
        let aa = 1.0 / (ones.transpose() * &ga_inv * &ones)[(0, 0)].sqrt();
        let w = &ga_inv * &ones * aa;
        let u = &xa * &w;
        let a = x.transpose() * &u;

        let mut gamma = cmax / aa;
        let mut enter = false;
        for j in 0..n {
            if active.contains(&j) {
                continue;
            }
            for g in [(cmax - c[j]) / (aa - a[j]), (cmax + c[j]) / (aa + a[j])] {
                if g > eps && g < gamma {
                    gamma = g;
                    enter = true;
                }
            }
        }
        let mut drop: Option<usize> = None;
        for (q, &j) in active.iter().enumerate() {
            let dj = signs[q] * w[q];
            let g = -beta[j] / dj;
            if g > eps && g < gamma {
                gamma = g;
                drop = Some(j);
            }
        }
        for (q, &j) in active.iter().enumerate() {
            beta[j] += gamma * signs[q] * w[q];
        }
        mu += &u * gamma;
        dropped = None;
        if let Some(j) = drop {
            beta[j] = 0.0;
            active.retain(|&i| i != j);
            dropped = Some(j);
        }
        knots.push(beta.clone());
        if !enter && drop.is_none() {
            break;
        }
    }
    knots
}

/// Euclidean projection onto `{x : ‖x‖₁ ≤ radius}`.
pub fn project_l1(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    if v.lp_norm(1) <= radius {
        return v.clone();
    }
    if radius <= 0.0 {
        return DVector::zeros(v.len());
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - radius) / (i + 1) as f64;
        if ui > t {
            theta = t;
        }
    }
    v.map(|x| soft(x, theta))
}

/// Area under the ROC curve with mid-ranks for tied scores.
pub fn auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for q in i..=j {
            ranks[idx[q]] = mid;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = n as f64 - n_pos;
    let rank_sum: f64 = (0..n).filter(|&q| labels[q]).map(|q| ranks[q]).sum();
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}
