//! Exact Gaussian inference for the hidden states.
//!
//! The forward pass is the covariance-form Kalman filter with the previous
//! observation entering both equations as a known input (`y_0 = 0`). The
//! backward pass is the Rauch–Tung–Striebel smoother, extended with the
//! lag-one cross-covariances `Cov[θ_t, θ_{t-1} | y_{1:T}]` the EM needs.
//! All covariances are symmetrized after every update.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::em::ESuffStats;
use crate::linalg::{cholesky_jitter, log_det_from_cholesky, outer, symmetrize};
use crate::model::{Dataset, ModelParams};
use crate::{lit, NetinfError, Result, Scalar};

/// Output of the forward pass for one replicate.
///
/// `filt_mean`/`filt_cov` have length `T + 1` with index 0 holding the prior
/// `(0, Q0)`. The predictive and innovation arrays have length `T`, index
/// `t - 1` holding the quantities for time `t`.
#[derive(Debug, Clone)]
pub struct FilteredMoments<T: Scalar> {
    pub pred_mean: Vec<DVector<T>>,
    pub pred_cov: Vec<DMatrix<T>>,
    pub filt_mean: Vec<DVector<T>>,
    pub filt_cov: Vec<DMatrix<T>>,
    pub innovation: Vec<DVector<T>>,
    pub innovation_cov: Vec<DMatrix<T>>,
    pub loglik: T,
}

/// Smoothed moments for one replicate, indexed by t = 0..=T.
///
/// `lag1[t]` is `Cov[θ_t, θ_{t-1} | y]`; `lag1[0]` is unused and zero.
#[derive(Debug, Clone)]
pub struct SmoothedMoments<T: Scalar> {
    pub mean: Vec<DVector<T>>,
    pub cov: Vec<DMatrix<T>>,
    pub lag1: Vec<DMatrix<T>>,
}

fn check_series<T: Scalar>(params: &ModelParams<T>, y: &[DVector<T>]) -> Result<()> {
    let p = params.p();
    for (t, yt) in y.iter().enumerate() {
        if yt.len() != p {
            return Err(NetinfError::DimensionMismatch(format!(
                "observation at time {} has length {}, model has p={p}",
                t + 1,
                yt.len()
            )));
        }
        if !yt.iter().all(|v| v.is_finite()) {
            return Err(NetinfError::NonFinite(format!("observation at time {}", t + 1)));
        }
    }
    Ok(())
}

pub fn kalman_filter<T: Scalar>(
    params: &ModelParams<T>,
    y: &[DVector<T>],
) -> Result<FilteredMoments<T>> {
    check_series(params, y)?;
    let (p, k) = (params.p(), params.k());
    let n = y.len();
    let ln_2pi = lit::<T>((2.0 * std::f64::consts::PI).ln());
    let half = lit::<T>(0.5);
    let p_term = lit::<T>(p as f64) * ln_2pi;
    let eye_k = DMatrix::<T>::identity(k, k);
    let eye_p = DMatrix::<T>::identity(p, p);
    let ft = params.f.transpose();
    let zt = params.z.transpose();

    let mut out = FilteredMoments {
        pred_mean: Vec::with_capacity(n),
        pred_cov: Vec::with_capacity(n),
        filt_mean: Vec::with_capacity(n + 1),
        filt_cov: Vec::with_capacity(n + 1),
        innovation: Vec::with_capacity(n),
        innovation_cov: Vec::with_capacity(n),
        loglik: T::zero(),
    };
    out.filt_mean.push(DVector::zeros(k));
    out.filt_cov.push(params.q0.clone());

    let zero_y = DVector::<T>::zeros(p);
    for t in 0..n {
        let y_prev = if t == 0 { &zero_y } else { &y[t - 1] };
        let m = &out.filt_mean[t];
        let cov = &out.filt_cov[t];

        let m_pred = &params.f * m + &params.a * y_prev;
        let mut p_pred = &params.f * cov * &ft + &eye_k;
        symmetrize(&mut p_pred);

        let e = &y[t] - &params.z * &m_pred - &params.b * y_prev;
        let zp = &params.z * &p_pred; // p×k
        let mut s = &zp * &zt + &eye_p;
        symmetrize(&mut s);
        let chol = cholesky_jitter(&s, "innovation covariance")?;

        // Kalman gain transposed: S⁻¹ Z P⁻ (p×k).
        let gain_t = chol.solve(&zp);
        let m_filt = &m_pred + gain_t.transpose() * &e;
        let mut p_filt = &p_pred - gain_t.transpose() * &zp;
        symmetrize(&mut p_filt);

        let whitened = chol.l_dirty().solve_lower_triangular(&e).ok_or_else(|| {
            NetinfError::NotPositiveDefinite("innovation covariance factor".into())
        })?;
        let quad = whitened.norm_squared();
        let term = -half * (p_term + log_det_from_cholesky(&chol) + quad);
        if !term.is_finite() {
            return Err(NetinfError::NonFinite(format!(
                "log-likelihood contribution at time {}",
                t + 1
            )));
        }
        out.loglik += term;

        out.pred_mean.push(m_pred);
        out.pred_cov.push(p_pred);
        out.innovation.push(e);
        out.innovation_cov.push(s);
        out.filt_mean.push(m_filt);
        out.filt_cov.push(p_filt);
    }
    Ok(out)
}

pub fn rts_smoother<T: Scalar>(
    params: &ModelParams<T>,
    fm: &FilteredMoments<T>,
) -> Result<SmoothedMoments<T>> {
    let n = fm.pred_mean.len();
    let k = params.k();
    if fm.filt_mean.len() != n + 1 || params.f.nrows() != k || fm.filt_mean[0].len() != k {
        return Err(NetinfError::DimensionMismatch(
            "filtered moments do not match model parameters".into(),
        ));
    }
    let mut mean = fm.filt_mean.clone();
    let mut cov = fm.filt_cov.clone();
    let mut lag1 = vec![DMatrix::<T>::zeros(k, k); n + 1];

    for t in (0..n).rev() {
        // Gain J_t = P_t F' (P⁻_{t+1})⁻¹, computed as the transpose of a solve.
        let chol = cholesky_jitter(&fm.pred_cov[t], "predicted state covariance")?;
        let gain = chol.solve(&(&params.f * &fm.filt_cov[t])).transpose();

        let next_mean = mean[t + 1].clone();
        let next_cov = cov[t + 1].clone();
        mean[t] = &fm.filt_mean[t] + &gain * (&next_mean - &fm.pred_mean[t]);
        let mut c = &fm.filt_cov[t] + &gain * (&next_cov - &fm.pred_cov[t]) * gain.transpose();
        symmetrize(&mut c);
        cov[t] = c;
        lag1[t + 1] = &next_cov * gain.transpose();
    }
    Ok(SmoothedMoments { mean, cov, lag1 })
}

/// Marginal log-likelihood of all replicates, summed in replicate order.
pub fn observed_loglik<T: Scalar>(params: &ModelParams<T>, data: &Dataset<T>) -> Result<T> {
    params.check_dims(&data.dims())?;
    let parts: Vec<Result<T>> = data
        .replicates()
        .par_iter()
        .map(|y| kalman_filter(params, y).map(|fm| fm.loglik))
        .collect();
    let mut total = T::zero();
    for part in parts {
        total += part?;
    }
    Ok(total)
}

fn replicate_suffstats<T: Scalar>(
    params: &ModelParams<T>,
    y: &[DVector<T>],
) -> Result<(ESuffStats<T>, T)> {
    let fm = kalman_filter(params, y)?;
    let sm = rts_smoother(params, &fm)?;
    let (p, k) = (params.p(), params.k());
    let mut st = ESuffStats::zeros(p, k);
    let zero_y = DVector::<T>::zeros(p);
    for t in 1..=y.len() {
        let m = &sm.mean[t];
        let m_prev = &sm.mean[t - 1];
        let yt = &y[t - 1];
        let y_prev = if t == 1 { &zero_y } else { &y[t - 2] };

        st.s_tt += &sm.cov[t] + outer(m, m);
        st.s_tt_lag += &sm.lag1[t] + outer(m, m_prev);
        st.s_tt_prev += &sm.cov[t - 1] + outer(m_prev, m_prev);
        st.s_ty += outer(m, yt);
        st.s_ty_prev += outer(m, y_prev);
        st.s_tprev_yprev += outer(m_prev, y_prev);
        st.s_yy += outer(yt, yt);
        st.s_yy_lag += outer(yt, y_prev);
        st.s_yy_prev += outer(y_prev, y_prev);
    }
    st.n_reps = 1;
    st.n_steps = y.len();
    Ok((st, fm.loglik))
}

/// Runs filter and smoother on every replicate and accumulates the
/// expected complete-data moments, in ascending replicate order.
pub fn accumulate_suffstats<T: Scalar>(
    params: &ModelParams<T>,
    data: &Dataset<T>,
) -> Result<ESuffStats<T>> {
    accumulate_with_loglik(params, data).map(|(st, _)| st)
}

/// As [`accumulate_suffstats`], also returning the observed log-likelihood
/// at `params` from the same forward passes.
pub fn accumulate_with_loglik<T: Scalar>(
    params: &ModelParams<T>,
    data: &Dataset<T>,
) -> Result<(ESuffStats<T>, T)> {
    params.check_dims(&data.dims())?;
    let parts: Vec<Result<(ESuffStats<T>, T)>> = data
        .replicates()
        .par_iter()
        .map(|y| replicate_suffstats(params, y))
        .collect();
    let mut total = ESuffStats::zeros(params.p(), params.k());
    let mut loglik = T::zero();
    for part in parts {
        let (st, ll) = part?;
        total.add_assign(&st);
        loglik += ll;
    }
    Ok((total, loglik))
}
