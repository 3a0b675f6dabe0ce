//! LARS-lasso driven entirely by a Gram matrix and a correlation vector.
//!
//! Maximizing `2b'x - x'Sx` subject to `‖x‖₁ ≤ s` is a lasso problem for any
//! factorization `S = C'C` with response `C S⁻¹ b`, and every quantity the
//! LARS recursion touches (current correlations, equiangular direction,
//! step length) can be written in terms of `S` and `b` alone. The solver
//! therefore never forms a factor of `S` or its inverse; it only factors
//! the active-set submatrix to get the equiangular direction.
//!
//! The lasso modification is always on: a coefficient whose value would
//! cross zero is dropped from the active set at that point.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{asymmetry, l1_norm, max_abs};
use crate::{lit, NetinfError, Result, Scalar};

/// `maximize 2b'x - x'Sx` with `S` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadProblem<T: Scalar> {
    gram: DMatrix<T>,
    corr: DVector<T>,
}

impl<T: Scalar> QuadProblem<T> {
    pub fn new(gram: DMatrix<T>, corr: DVector<T>) -> Result<Self> {
        let n = corr.len();
        if gram.shape() != (n, n) {
            return Err(NetinfError::DimensionMismatch(format!(
                "Gram matrix is {}x{} but correlation vector has length {n}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if !gram.iter().chain(corr.iter()).all(|v| v.is_finite()) {
            return Err(NetinfError::NonFinite("quadratic problem".into()));
        }
        let scale = T::one().max(max_abs(&gram));
        if asymmetry(&gram) > lit::<T>(1e-10) * scale {
            return Err(NetinfError::IllPosed("Gram matrix is not symmetric".into()));
        }
        Ok(Self { gram, corr })
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    pub fn corr(&self) -> &DVector<T> {
        &self.corr
    }

    pub fn dim(&self) -> usize {
        self.corr.len()
    }

    /// `2b'x - x'Sx`.
    pub fn objective(&self, x: &DVector<T>) -> T {
        lit::<T>(2.0) * self.corr.dot(x) - x.dot(&(&self.gram * x))
    }

    /// Current correlations `b - Sx`.
    pub fn residual_corr(&self, x: &DVector<T>) -> DVector<T> {
        &self.corr - &self.gram * x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LarsKnot<T: Scalar> {
    pub coef: DVector<T>,
    pub l1_norm: T,
    /// Active indices after the event at this knot, ascending.
    pub active_set: Vec<usize>,
    /// `max_j |b_j - (S·coef)_j|`.
    pub lambda: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LarsPath<T: Scalar> {
    pub knots: Vec<LarsKnot<T>>,
    /// False when the path was cut at `max_knots` before reaching `S⁻¹b`.
    pub complete: bool,
    /// Diagonal jitter that had to be added to `S`, zero if none.
    pub jitter: T,
}

impl<T: Scalar> LarsPath<T> {
    pub fn last(&self) -> &LarsKnot<T> {
        self.knots.last().expect("a path always has its zero knot")
    }

    /// L1 norm at the end of the path (the unconstrained optimum when complete).
    pub fn saturated_norm(&self) -> T {
        self.last().l1_norm
    }
}

/// Default knot cap: generous enough that drops never truncate in practice.
pub fn default_max_knots(n: usize) -> usize {
    8 * n + 64
}

struct CholeskyFailed;

pub fn lars_path<T: Scalar>(prob: &QuadProblem<T>, max_knots: usize) -> Result<LarsPath<T>> {
    if max_knots == 0 {
        return Err(NetinfError::InvalidArgument("max_knots must be at least 1".into()));
    }
    if let Ok((knots, complete)) = trace_path(&prob.gram, &prob.corr, max_knots) {
        return Ok(LarsPath { knots, complete, jitter: T::zero() });
    }
    let n = prob.dim();
    let jitter = lit::<T>(1e-10) * prob.gram.trace() / lit::<T>(n as f64);
    let mut gram = prob.gram.clone();
    for i in 0..n {
        gram[(i, i)] += jitter;
    }
    match trace_path(&gram, &prob.corr, max_knots) {
        Ok((knots, complete)) => Ok(LarsPath { knots, complete, jitter }),
        Err(CholeskyFailed) => Err(NetinfError::IllPosed(
            "active-set Gram submatrix is singular even after jitter".into(),
        )),
    }
}

fn make_knot<T: Scalar>(
    gram: &DMatrix<T>,
    corr: &DVector<T>,
    coef: &DVector<T>,
    active: &[usize],
) -> LarsKnot<T> {
    let c = corr - gram * coef;
    LarsKnot {
        coef: coef.clone(),
        l1_norm: l1_norm(coef),
        active_set: active.to_vec(),
        lambda: c.amax(),
    }
}

/// Appends a knot, or replaces the previous one when the step had zero
/// length so that L1 norms stay strictly increasing. The zero knot is
/// never replaced.
fn push_knot<T: Scalar>(knots: &mut Vec<LarsKnot<T>>, knot: LarsKnot<T>) {
    let prev = knots.last().expect("zero knot present");
    if knot.l1_norm > prev.l1_norm {
        knots.push(knot);
    } else if knots.len() > 1 {
        *knots.last_mut().unwrap() = knot;
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

type Traced<T> = (Vec<LarsKnot<T>>, bool);

fn trace_path<T: Scalar>(
    gram: &DMatrix<T>,
    corr: &DVector<T>,
    max_knots: usize,
) -> std::result::Result<Traced<T>, CholeskyFailed> {
    let n = corr.len();
    let mut beta = DVector::<T>::zeros(n);
    let mut knots = vec![make_knot(gram, corr, &beta, &[])];
    let mut lambda = corr.amax();
    if n == 0 || lambda <= T::zero() {
        return Ok((knots, true));
    }

    // Tolerances relative to the starting correlation level.
    let tie_tol = lit::<T>(1e-12) * lambda;
    let step_tol = lit::<T>(1e-14) * lambda;
    let denom_tol = lit::<T>(1e-12);
    let drop_tol = lit::<T>(1e-9) * lambda;
    let unbounded = T::max_value().unwrap_or(lambda * lit(1e300));

    let mut in_active = vec![false; n];
    let mut active: Vec<usize> = Vec::new();
    let mut just_dropped: Vec<usize> = Vec::new();
    let mut c = corr.clone();

    let admit = |c: &DVector<T>,
                 threshold: T,
                 in_active: &mut [bool],
                 active: &mut Vec<usize>,
                 skip: &[usize]| {
        for j in 0..n {
            if !in_active[j] && !skip.contains(&j) && c[j].abs() >= threshold {
                in_active[j] = true;
                active.push(j);
            }
        }
        active.sort_unstable();
    };
    admit(&c, lambda - tie_tol, &mut in_active, &mut active, &[]);

    loop {
        if knots.len() >= max_knots {
            return Ok((knots, false));
        }
        let m = active.len();
        let signs = DVector::<T>::from_iterator(
            m,
            active.iter().map(|&j| {
                let s = sign(beta[j]);
                if s == T::zero() {
                    sign(c[j])
                } else {
                    s
                }
            }),
        );
        let sub = DMatrix::<T>::from_fn(m, m, |r, q| gram[(active[r], active[q])]);
        let chol = sub.cholesky().ok_or(CholeskyFailed)?;
        let dir_active = chol.solve(&signs);
        let mut dir = DVector::<T>::zeros(n);
        for (r, &j) in active.iter().enumerate() {
            dir[j] = dir_active[r];
        }
        // Rate of change of every correlation along the direction; on the
        // active set it equals the sign vector.
        let rate = gram * &dir;

        let mut enter_gamma = unbounded;
        for j in 0..n {
            if in_active[j] {
                continue;
            }
            // A variable dropped at the last knot sits exactly at |c_j| = λ;
            // only the branch on the opposite side can admit it again.
            let fresh = just_dropped.contains(&j);
            let d1 = T::one() - rate[j];
            if d1 > denom_tol && !(fresh && lambda - c[j] <= drop_tol) {
                let g = (lambda - c[j]) / d1;
                if g > step_tol && g < enter_gamma {
                    enter_gamma = g;
                }
            }
            let d2 = T::one() + rate[j];
            if d2 > denom_tol && !(fresh && lambda + c[j] <= drop_tol) {
                let g = (lambda + c[j]) / d2;
                if g > step_tol && g < enter_gamma {
                    enter_gamma = g;
                }
            }
        }
        let mut drop_at = vec![unbounded; n];
        let mut drop_gamma = unbounded;
        for &j in &active {
            if dir[j] != T::zero() && beta[j] != T::zero() {
                let g = -beta[j] / dir[j];
                if g > step_tol {
                    drop_at[j] = g;
                    if g < drop_gamma {
                        drop_gamma = g;
                    }
                }
            }
        }

        let gamma = lambda.min(enter_gamma).min(drop_gamma);
        let reaches_end = gamma >= lambda;
        let gamma_tie = tie_tol.max(gamma * lit(1e-10));
        let dropping = !reaches_end && (drop_gamma - gamma).abs() <= gamma_tie;
        let entering = !reaches_end && (enter_gamma - gamma).abs() <= gamma_tie;

        beta += &dir * gamma;
        lambda -= gamma;
        just_dropped.clear();

        if reaches_end {
            push_knot(&mut knots, make_knot(gram, corr, &beta, &active));
            return Ok((knots, true));
        }
        if dropping {
            active.retain(|&j| {
                if (drop_at[j] - gamma).abs() <= gamma_tie {
                    beta[j] = T::zero();
                    in_active[j] = false;
                    just_dropped.push(j);
                    false
                } else {
                    true
                }
            });
        }
        c = corr - gram * &beta;
        if entering {
            admit(&c, lambda - gamma_tie, &mut in_active, &mut active, &just_dropped);
        }
        push_knot(&mut knots, make_knot(gram, corr, &beta, &active));

        if active.is_empty() {
            admit(&c, lambda - tie_tol, &mut in_active, &mut active, &[]);
            if active.is_empty() {
                return Ok((knots, true));
            }
        }
    }
}

/// Coefficients at L1 budget `s`, interpolating linearly between knots.
pub fn coefs_at_budget<T: Scalar>(path: &LarsPath<T>, s: T) -> Result<DVector<T>> {
    if !(s >= T::zero()) {
        return Err(NetinfError::InvalidArgument(format!(
            "L1 budget must be non-negative, got {s}"
        )));
    }
    let knots = &path.knots;
    let last = path.last();
    if s >= last.l1_norm {
        return Ok(last.coef.clone());
    }
    let i = knots
        .iter()
        .position(|k| k.l1_norm >= s)
        .expect("s is below the final knot norm");
    if i == 0 {
        return Ok(knots[0].coef.clone());
    }
    let (lo, hi) = (&knots[i - 1], &knots[i]);
    let w = (s - lo.l1_norm) / (hi.l1_norm - lo.l1_norm);
    Ok(&lo.coef * (T::one() - w) + &hi.coef * w)
}

/// Coefficients at a fraction `f` of the path's final L1 norm.
pub fn coefs_at_fraction<T: Scalar>(path: &LarsPath<T>, f: T) -> Result<DVector<T>> {
    if !(f >= T::zero()) {
        return Err(NetinfError::InvalidArgument(format!(
            "budget fraction must be non-negative, got {f}"
        )));
    }
    if f >= T::one() {
        return Ok(path.last().coef.clone());
    }
    coefs_at_budget(path, f * path.saturated_norm())
}

/// `argmax 2b'x - x'Sx` subject to `‖x‖₁ ≤ s`.
pub fn max_quadratic_l1<T: Scalar>(prob: &QuadProblem<T>, s: T) -> Result<DVector<T>> {
    let path = lars_path(prob, default_max_knots(prob.dim()))?;
    coefs_at_budget(&path, s)
}
