//! Penalized EM for the input-dependent state-space model.
//!
//! With unit noise covariances the expected complete-data log-likelihood
//! splits into an observation quadratic in `(Z, B)` and a transition
//! quadratic in `(F, A)`, and each of those separates over the rows of its
//! matrices. Every row update is therefore an independent problem of the
//! form `maximize 2b'x - x'Sx` subject to an L1 budget, solved with
//! [`crate::lars`]. One M-step is one block-coordinate sweep Z → B → F → A,
//! each block using the most recently updated partner.
//!
//! Fraction budgets are resolved to absolute per-row budgets at the first
//! M-step of a fit and held fixed afterwards, so every fit maximizes over a
//! fixed constraint set and the observed log-likelihood never decreases.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kalman::{accumulate_suffstats, accumulate_with_loglik};
use crate::lars::{coefs_at_budget, default_max_knots, lars_path, QuadProblem};
use crate::model::{random_sparse_params, Dataset, Dims, ModelParams};
use crate::{lit, NetinfError, Result, Scalar};

/// Expected complete-data moments summed over replicates and t = 1..T.
///
/// `E[θ_t θ_s']` terms include the smoothed covariances; the `y` terms use
/// `y_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ESuffStats<T: Scalar> {
    /// Σ E[θ_t θ_t'] (k×k)
    pub s_tt: DMatrix<T>,
    /// Σ E[θ_t θ_{t-1}'] (k×k)
    pub s_tt_lag: DMatrix<T>,
    /// Σ E[θ_{t-1} θ_{t-1}'] (k×k)
    pub s_tt_prev: DMatrix<T>,
    /// Σ E[θ_t] y_t' (k×p)
    pub s_ty: DMatrix<T>,
    /// Σ E[θ_t] y_{t-1}' (k×p)
    pub s_ty_prev: DMatrix<T>,
    /// Σ E[θ_{t-1}] y_{t-1}' (k×p)
    pub s_tprev_yprev: DMatrix<T>,
    /// Σ y_t y_t' (p×p)
    pub s_yy: DMatrix<T>,
    /// Σ y_t y_{t-1}' (p×p)
    pub s_yy_lag: DMatrix<T>,
    /// Σ y_{t-1} y_{t-1}' (p×p)
    pub s_yy_prev: DMatrix<T>,
    pub p: usize,
    pub k: usize,
    pub n_reps: usize,
    /// Time steps per replicate.
    pub n_steps: usize,
}

impl<T: Scalar> ESuffStats<T> {
    pub fn zeros(p: usize, k: usize) -> Self {
        Self {
            s_tt: DMatrix::zeros(k, k),
            s_tt_lag: DMatrix::zeros(k, k),
            s_tt_prev: DMatrix::zeros(k, k),
            s_ty: DMatrix::zeros(k, p),
            s_ty_prev: DMatrix::zeros(k, p),
            s_tprev_yprev: DMatrix::zeros(k, p),
            s_yy: DMatrix::zeros(p, p),
            s_yy_lag: DMatrix::zeros(p, p),
            s_yy_prev: DMatrix::zeros(p, p),
            p,
            k,
            n_reps: 0,
            n_steps: 0,
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        self.s_tt += &other.s_tt;
        self.s_tt_lag += &other.s_tt_lag;
        self.s_tt_prev += &other.s_tt_prev;
        self.s_ty += &other.s_ty;
        self.s_ty_prev += &other.s_ty_prev;
        self.s_tprev_yprev += &other.s_tprev_yprev;
        self.s_yy += &other.s_yy;
        self.s_yy_lag += &other.s_yy_lag;
        self.s_yy_prev += &other.s_yy_prev;
        self.n_reps += other.n_reps;
        self.n_steps = other.n_steps;
    }

    /// The nine moment blocks in declaration order.
    pub fn blocks(&self) -> [&DMatrix<T>; 9] {
        [
            &self.s_tt,
            &self.s_tt_lag,
            &self.s_tt_prev,
            &self.s_ty,
            &self.s_ty_prev,
            &self.s_tprev_yprev,
            &self.s_yy,
            &self.s_yy_lag,
            &self.s_yy_prev,
        ]
    }
}

/// Interaction matrix blocks, in M-step sweep order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    Z,
    B,
    F,
    A,
}

impl Block {
    pub const SWEEP: [Block; 4] = [Block::Z, Block::B, Block::F, Block::A];

    pub fn name(self) -> &'static str {
        match self {
            Block::Z => "Z",
            Block::B => "B",
            Block::F => "F",
            Block::A => "A",
        }
    }

    pub fn rows(self, p: usize, k: usize) -> usize {
        match self {
            Block::Z | Block::B => p,
            Block::F | Block::A => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetMode {
    /// Whole-matrix L1 budgets, split evenly across rows.
    Absolute,
    /// Each row keeps this fraction of its unconstrained L1 norm.
    Fraction,
}

/// L1 budgets per interaction matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties<T: Scalar> {
    pub s_z: T,
    pub s_b: T,
    pub s_f: T,
    pub s_a: T,
    pub mode: BudgetMode,
}

impl<T: Scalar> Penalties<T> {
    pub fn new(s_z: T, s_b: T, s_f: T, s_a: T, mode: BudgetMode) -> Result<Self> {
        let pen = Self { s_z, s_b, s_f, s_a, mode };
        for (name, v) in [("s_Z", s_z), ("s_B", s_b), ("s_F", s_f), ("s_A", s_a)] {
            if !(v >= T::zero()) {
                return Err(NetinfError::InvalidArgument(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
            if mode == BudgetMode::Fraction && v > T::one() {
                return Err(NetinfError::InvalidArgument(format!(
                    "{name} is a fraction and must be at most 1, got {v}"
                )));
            }
        }
        Ok(pen)
    }

    pub fn fraction(s_z: T, s_b: T, s_f: T, s_a: T) -> Result<Self> {
        Self::new(s_z, s_b, s_f, s_a, BudgetMode::Fraction)
    }

    pub fn absolute(s_z: T, s_b: T, s_f: T, s_a: T) -> Result<Self> {
        Self::new(s_z, s_b, s_f, s_a, BudgetMode::Absolute)
    }

    /// No effective constraint on any block.
    pub fn unconstrained() -> Self {
        Self {
            s_z: T::one(),
            s_b: T::one(),
            s_f: T::one(),
            s_a: T::one(),
            mode: BudgetMode::Fraction,
        }
    }

    pub fn budget(&self, block: Block) -> T {
        match block {
            Block::Z => self.s_z,
            Block::B => self.s_b,
            Block::F => self.s_f,
            Block::A => self.s_a,
        }
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.s_z, self.s_b, self.s_f, self.s_a]
    }
}

/// Rule for the L1 budget of a single row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowBudget<T: Scalar> {
    Absolute(T),
    Fraction(T),
}

/// Per-row budget rules for all four blocks, in [`Block::SWEEP`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct RowBudgets<T: Scalar> {
    rules: [Vec<RowBudget<T>>; 4],
}

impl<T: Scalar> RowBudgets<T> {
    pub fn from_penalties(pen: &Penalties<T>, p: usize, k: usize) -> Self {
        let infinity = lit::<T>(f64::INFINITY);
        let rules = Block::SWEEP.map(|block| {
            let rows = block.rows(p, k);
            let s = pen.budget(block);
            let rule = match pen.mode {
                BudgetMode::Absolute => RowBudget::Absolute(s / lit::<T>(rows as f64)),
                BudgetMode::Fraction if s >= T::one() => RowBudget::Absolute(infinity),
                BudgetMode::Fraction => RowBudget::Fraction(s),
            };
            vec![rule; rows]
        });
        Self { rules }
    }

    pub fn rows(&self, block: Block) -> &[RowBudget<T>] {
        &self.rules[block as usize]
    }

    /// Absolute per-row budgets, if every rule is absolute.
    pub fn absolute(&self, block: Block) -> Option<Vec<T>> {
        self.rows(block)
            .iter()
            .map(|r| match r {
                RowBudget::Absolute(s) => Some(*s),
                RowBudget::Fraction(_) => None,
            })
            .collect()
    }
}

/// Builds the quadratic for one row of `which`, holding `other` fixed.
///
/// `other` is B when updating Z, Z when updating B, A when updating F and
/// F when updating A.
pub fn mstep_row_problem<T: Scalar>(
    stats: &ESuffStats<T>,
    which: Block,
    row: usize,
    other: &DMatrix<T>,
) -> Result<QuadProblem<T>> {
    let (p, k) = (stats.p, stats.k);
    let rows = which.rows(p, k);
    if row >= rows {
        return Err(NetinfError::InvalidArgument(format!(
            "row {row} out of range for block {} with {rows} rows",
            which.name()
        )));
    }
    let expected = match which {
        Block::Z => (p, p),
        Block::B => (p, k),
        Block::F => (k, p),
        Block::A => (k, k),
    };
    if other.shape() != expected {
        return Err(NetinfError::DimensionMismatch(format!(
            "partner block for {} is {}x{}, expected {}x{}",
            which.name(),
            other.nrows(),
            other.ncols(),
            expected.0,
            expected.1
        )));
    }
    let partner_row: DVector<T> = other.row(row).transpose();
    let (gram, corr) = match which {
        Block::Z => (
            stats.s_tt.clone(),
            stats.s_ty.column(row) - &stats.s_ty_prev * &partner_row,
        ),
        Block::B => (
            stats.s_yy_prev.clone(),
            stats.s_yy_lag.row(row).transpose() - stats.s_ty_prev.transpose() * &partner_row,
        ),
        Block::F => (
            stats.s_tt_prev.clone(),
            stats.s_tt_lag.row(row).transpose() - &stats.s_tprev_yprev * &partner_row,
        ),
        Block::A => (
            stats.s_yy_prev.clone(),
            stats.s_ty_prev.row(row).transpose()
                - stats.s_tprev_yprev.transpose() * &partner_row,
        ),
    };
    QuadProblem::new(gram, corr)
}

/// Solves one row problem; returns the coefficients and the absolute
/// budget the rule resolved to.
fn solve_row<T: Scalar>(prob: &QuadProblem<T>, rule: RowBudget<T>) -> Result<(DVector<T>, T)> {
    match rule {
        RowBudget::Absolute(s) if s <= T::zero() => Ok((DVector::zeros(prob.dim()), T::zero())),
        RowBudget::Fraction(f) if f <= T::zero() => Ok((DVector::zeros(prob.dim()), T::zero())),
        RowBudget::Absolute(s) => {
            let path = lars_path(prob, default_max_knots(prob.dim()))?;
            Ok((coefs_at_budget(&path, s)?, s))
        }
        RowBudget::Fraction(f) => {
            let path = lars_path(prob, default_max_knots(prob.dim()))?;
            let s = f * path.saturated_norm();
            Ok((coefs_at_budget(&path, s)?, s))
        }
    }
}

fn partner<T: Scalar>(params: &ModelParams<T>, block: Block) -> &DMatrix<T> {
    match block {
        Block::Z => &params.b,
        Block::B => &params.z,
        Block::F => &params.a,
        Block::A => &params.f,
    }
}

fn block_mut<T: Scalar>(params: &mut ModelParams<T>, block: Block) -> &mut DMatrix<T> {
    match block {
        Block::Z => &mut params.z,
        Block::B => &mut params.b,
        Block::F => &mut params.f,
        Block::A => &mut params.a,
    }
}

/// Updates every row of one block; returns the resolved row budgets.
pub fn update_block<T: Scalar>(
    stats: &ESuffStats<T>,
    params: &mut ModelParams<T>,
    block: Block,
    rules: &[RowBudget<T>],
) -> Result<Vec<T>> {
    let other = partner(params, block).clone();
    let solved: Vec<Result<(DVector<T>, T)>> = rules
        .par_iter()
        .enumerate()
        .map(|(row, &rule)| {
            let prob = mstep_row_problem(stats, block, row, &other)?;
            solve_row(&prob, rule)
        })
        .collect();
    let target = block_mut(params, block);
    let mut resolved = Vec::with_capacity(rules.len());
    for (row, res) in solved.into_iter().enumerate() {
        let (coef, s) = res?;
        target.set_row(row, &coef.transpose());
        resolved.push(s);
    }
    Ok(resolved)
}

/// One or more Z → B → F → A sweeps under explicit row budgets. Returns the
/// new parameters and the absolute budgets resolved on the first sweep.
pub fn mstep_with_budgets<T: Scalar>(
    stats: &ESuffStats<T>,
    current: &ModelParams<T>,
    budgets: &RowBudgets<T>,
    sweeps: usize,
) -> Result<(ModelParams<T>, RowBudgets<T>)> {
    let mut params = current.clone();
    let mut resolved = budgets.clone();
    let mut active = budgets.clone();
    for sweep in 0..sweeps.max(1) {
        for block in Block::SWEEP {
            let s = update_block(stats, &mut params, block, active.rows(block))?;
            if sweep == 0 {
                resolved.rules[block as usize] = s.into_iter().map(RowBudget::Absolute).collect();
            }
        }
        // Later sweeps reuse the budgets the first one settled on.
        active = resolved.clone();
    }
    Ok((params, resolved))
}

/// One M-step sweep with budgets taken directly from `pen`.
pub fn mstep<T: Scalar>(
    stats: &ESuffStats<T>,
    current: &ModelParams<T>,
    pen: &Penalties<T>,
) -> Result<ModelParams<T>> {
    let dims_ok = current.p() == stats.p && current.k() == stats.k;
    if !dims_ok {
        return Err(NetinfError::DimensionMismatch(
            "parameters and sufficient statistics disagree on p or k".into(),
        ));
    }
    let budgets = RowBudgets::from_penalties(pen, stats.p, stats.k);
    mstep_with_budgets(stats, current, &budgets, 1).map(|(params, _)| params)
}

/// E-step: expected sufficient statistics under `params`.
pub fn estep<T: Scalar>(params: &ModelParams<T>, data: &Dataset<T>) -> Result<ESuffStats<T>> {
    accumulate_suffstats(params, data)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec<T: Scalar> {
    /// Ridge regression for B, principal components of the residuals for
    /// Z, `F = 0.5·I`, `A = 0`, `Q0 = I`.
    DataDriven,
    /// Dense random parameters from the given seed.
    Random { seed: u64 },
    Explicit(ModelParams<T>),
}

impl<T: Scalar> Default for InitSpec<T> {
    fn default() -> Self {
        InitSpec::DataDriven
    }
}

impl<T: Scalar> InitSpec<T> {
    pub fn build(&self, data: &Dataset<T>, dims: &Dims) -> Result<ModelParams<T>> {
        match self {
            InitSpec::DataDriven => data_driven_init(data, dims),
            InitSpec::Random { seed } => random_sparse_params(dims, 1.0, 0.5, *seed),
            InitSpec::Explicit(params) => {
                params.validate()?;
                params.check_dims(dims)?;
                Ok(params.clone())
            }
        }
    }
}

const INIT_RIDGE: f64 = 1e-3;

fn data_driven_init<T: Scalar>(data: &Dataset<T>, dims: &Dims) -> Result<ModelParams<T>> {
    let (p, k) = (dims.p, dims.k);
    let mut s_prev = DMatrix::<T>::zeros(p, p);
    let mut s_lag = DMatrix::<T>::zeros(p, p);
    for series in data.replicates() {
        for t in 1..series.len() {
            s_prev += &series[t - 1] * series[t - 1].transpose();
            s_lag += &series[t] * series[t - 1].transpose();
        }
    }
    let mut ridge = s_prev.clone();
    for i in 0..p {
        ridge[(i, i)] += lit(INIT_RIDGE);
    }
    let chol = crate::linalg::cholesky_jitter(&ridge, "ridge Gram matrix")?;
    let b = chol.solve(&s_lag.transpose()).transpose();

    let mut resid_cov = DMatrix::<T>::zeros(p, p);
    let mut count = 0usize;
    let zero = DVector::<T>::zeros(p);
    for series in data.replicates() {
        for t in 0..series.len() {
            let prev = if t == 0 { &zero } else { &series[t - 1] };
            let r = &series[t] - &b * prev;
            resid_cov += &r * r.transpose();
            count += 1;
        }
    }
    resid_cov /= lit::<T>(count as f64);
    crate::linalg::symmetrize(&mut resid_cov);

    let eig = SymmetricEigen::new(resid_cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut z = DMatrix::<T>::zeros(p, k);
    let floor = lit::<T>(0.01);
    for col in 0..k {
        if col < p {
            let idx = order[col];
            let mut v = eig.eigenvectors.column(idx).into_owned();
            // Deterministic sign: largest-magnitude entry positive.
            let pivot = v.iamax();
            if v[pivot] < T::zero() {
                v = -v;
            }
            let scale = (eig.eigenvalues[idx] - T::one()).max(floor).sqrt();
            z.set_column(col, &(v * scale));
        } else {
            z[(col % p, col)] = floor.sqrt();
        }
    }
    ModelParams::new(
        DMatrix::identity(k, k) * lit::<T>(0.5),
        DMatrix::zeros(k, p),
        z,
        b,
        DMatrix::identity(k, k),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOpts<T: Scalar> {
    /// Stop when |Δ loglik| / (1 + |loglik|) falls below this.
    pub rel_tol: T,
    pub max_iter: usize,
    /// Z → B → F → A sweeps per M-step.
    pub inner_sweeps: usize,
}

impl<T: Scalar> Default for ConvergenceOpts<T> {
    fn default() -> Self {
        Self {
            rel_tol: lit(1e-6),
            max_iter: 500,
            inner_sweeps: 1,
        }
    }
}

/// Entries with magnitude above 1e-12, per matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NonzeroCounts {
    pub f: usize,
    pub a: usize,
    pub z: usize,
    pub b: usize,
}

impl NonzeroCounts {
    pub fn of<T: Scalar>(params: &ModelParams<T>) -> Self {
        let count = |m: &DMatrix<T>| m.iter().filter(|v| v.abs() > lit::<T>(1e-12)).count();
        Self {
            f: count(&params.f),
            a: count(&params.a),
            z: count(&params.z),
            b: count(&params.b),
        }
    }

    pub fn total(&self) -> usize {
        self.f + self.a + self.z + self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Scalar> {
    pub params: ModelParams<T>,
    /// Observed-data log-likelihood after each M-step.
    pub loglik_trace: Vec<T>,
    /// Log-likelihood at the starting parameters.
    pub initial_loglik: T,
    pub n_iter: usize,
    pub converged: bool,
    pub nonzero_counts: NonzeroCounts,
}

impl<T: Scalar> FitResult<T> {
    pub fn final_loglik(&self) -> T {
        *self.loglik_trace.last().unwrap_or(&self.initial_loglik)
    }
}

/// Alternates E- and M-steps until the relative log-likelihood change drops
/// below `opts.rel_tol` or `opts.max_iter` M-steps have run.
pub fn em_fit<T: Scalar>(
    data: &Dataset<T>,
    dims: &Dims,
    pen: &Penalties<T>,
    init: &InitSpec<T>,
    opts: &ConvergenceOpts<T>,
) -> Result<FitResult<T>> {
    let data_dims = data.dims();
    if data_dims.p != dims.p || data_dims.n_times != dims.n_times || data_dims.n_reps != dims.n_reps {
        return Err(NetinfError::DimensionMismatch(format!(
            "dataset is {}x{}x{} (n_R x T x p), dims say {}x{}x{}",
            data_dims.n_reps, data_dims.n_times, data_dims.p, dims.n_reps, dims.n_times, dims.p
        )));
    }
    if opts.max_iter == 0 {
        return Err(NetinfError::InvalidArgument("max_iter must be at least 1".into()));
    }
    let mut params = init.build(data, dims)?;
    let (mut stats, initial_loglik) = accumulate_with_loglik(&params, data)?;
    if !initial_loglik.is_finite() {
        return Err(NetinfError::Diverged {
            iteration: 0,
            reason: "log-likelihood at the initial parameters is not finite".into(),
        });
    }
    let mut budgets = RowBudgets::from_penalties(pen, dims.p, dims.k);
    let mut trace: Vec<T> = Vec::new();
    let mut converged = false;

    for iteration in 1..=opts.max_iter {
        let (next, resolved) = mstep_with_budgets(&stats, &params, &budgets, opts.inner_sweeps)
            .map_err(|e| NetinfError::Diverged {
                iteration,
                reason: format!("M-step: {e}"),
            })?;
        if iteration == 1 {
            budgets = resolved;
        }
        params = next;
        let (next_stats, loglik) =
            accumulate_with_loglik(&params, data).map_err(|e| NetinfError::Diverged {
                iteration,
                reason: format!("E-step: {e}"),
            })?;
        if !loglik.is_finite() {
            return Err(NetinfError::Diverged {
                iteration,
                reason: "observed log-likelihood is not finite".into(),
            });
        }
        stats = next_stats;
        let done = trace
            .last()
            .map(|&prev| (loglik - prev).abs() / (T::one() + loglik.abs()) < opts.rel_tol)
            .unwrap_or(false);
        trace.push(loglik);
        if done {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        nonzero_counts: NonzeroCounts::of(&params),
        n_iter: trace.len(),
        params,
        loglik_trace: trace,
        initial_loglik,
        converged,
    })
}
