//! Penalty selection by corrected AIC.
//!
//! The parameter count entering AICc is the number of nonzero estimated
//! coefficients. The dense count `p² + 2kp + k²` is the special case of a
//! fully dense fit; using it for every grid point would make the penalty
//! term constant and the criterion would always pick the loosest budgets.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::em::{em_fit, BudgetMode, ConvergenceOpts, FitResult, InitSpec, Penalties};
use crate::model::{observation_count, Dataset, Dims, ModelParams};
use crate::{lit, NetinfError, Result, Scalar};

/// `-2·loglik + 2·P·N / (N - P - 1)`, or `+∞` when `N - P - 1 <= 0`.
pub fn aicc<T: Scalar>(loglik: T, p_eff: usize, n_obs: usize) -> T {
    if n_obs <= p_eff + 1 {
        return lit(f64::INFINITY);
    }
    let p = lit::<T>(p_eff as f64);
    let n = lit::<T>(n_obs as f64);
    lit::<T>(-2.0) * loglik + lit::<T>(2.0) * p * n / (n - p - T::one())
}

/// Number of entries of F, A, Z, B with magnitude above 1e-12.
pub fn effective_params<T: Scalar>(params: &ModelParams<T>) -> usize {
    crate::em::NonzeroCounts::of(params).total()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    FullCross,
    CoordinateDescent,
}

/// Budget values per axis, in `(s_Z, s_B, s_F, s_A)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T: Scalar> {
    pub axes: [Vec<T>; 4],
    pub mode: BudgetMode,
    /// Hidden dimensions to try; `None` uses the dims passed to selection.
    pub k_values: Option<Vec<usize>>,
    pub search: SearchMode,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(
        axes: [Vec<T>; 4],
        mode: BudgetMode,
        k_values: Option<Vec<usize>>,
        search: SearchMode,
    ) -> Result<Self> {
        for (name, axis) in ["s_Z", "s_B", "s_F", "s_A"].iter().zip(axes.iter()) {
            if axis.is_empty() {
                return Err(NetinfError::InvalidArgument(format!("grid axis {name} is empty")));
            }
            if axis.iter().any(|v| !(*v >= T::zero())) {
                return Err(NetinfError::InvalidArgument(format!(
                    "grid axis {name} has a negative or NaN entry"
                )));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(NetinfError::InvalidArgument(format!(
                    "grid axis {name} must be strictly ascending"
                )));
            }
            if mode == BudgetMode::Fraction && axis.iter().any(|v| *v > T::one()) {
                return Err(NetinfError::InvalidArgument(format!(
                    "grid axis {name} holds fractions above 1"
                )));
            }
        }
        if let Some(ks) = &k_values {
            if ks.is_empty() || ks.contains(&0) {
                return Err(NetinfError::InvalidArgument(
                    "k_values must be a non-empty list of positive integers".into(),
                ));
            }
        }
        Ok(Self { axes, mode, k_values, search })
    }

    /// Same values on every axis.
    pub fn uniform(values: Vec<T>, mode: BudgetMode, search: SearchMode) -> Result<Self> {
        Self::new(
            [values.clone(), values.clone(), values.clone(), values],
            mode,
            None,
            search,
        )
    }

    /// Fractions {0.05, 0.1, 0.2, 0.4, 0.8} on every axis, coordinate search.
    pub fn default_fractions() -> Self {
        let values = [0.05, 0.1, 0.2, 0.4, 0.8].iter().map(|&v| lit(v)).collect();
        Self::uniform(values, BudgetMode::Fraction, SearchMode::CoordinateDescent)
            .expect("default grid is valid")
    }

    fn penalties(&self, idx: [usize; 4]) -> Result<Penalties<T>> {
        Penalties::new(
            self.axes[0][idx[0]],
            self.axes[1][idx[1]],
            self.axes[2][idx[2]],
            self.axes[3][idx[3]],
            self.mode,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow<T: Scalar> {
    /// `(s_Z, s_B, s_F, s_A)`.
    pub penalties: [T; 4],
    pub k: usize,
    pub loglik: T,
    pub p_eff: usize,
    pub n_obs: usize,
    pub aicc: T,
    pub converged: bool,
    pub n_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTable<T: Scalar> {
    pub rows: Vec<SelectionRow<T>>,
    pub best_index: usize,
    pub mode: BudgetMode,
}

pub const SELECTION_CSV_HEADER: &str = "s_Z,s_B,s_F,s_A,k,loglik,P_eff,N,aicc,converged";

impl<T: Scalar> SelectionTable<T> {
    pub fn best(&self) -> &SelectionRow<T> {
        &self.rows[self.best_index]
    }

    pub fn to_csv(&self) -> String {
        render_rows(&self.rows)
    }
}

fn render_rows<T: Scalar>(rows: &[SelectionRow<T>]) -> String {
    let mut out = String::new();
    out.push_str(SELECTION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let [sz, sb, sf, sa] = r.penalties;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_num(sz),
            fmt_num(sb),
            fmt_num(sf),
            fmt_num(sa),
            r.k,
            fmt_num(r.loglik),
            r.p_eff,
            r.n_obs,
            fmt_num(r.aicc),
            r.converged
        );
    }
    out
}

/// Shortest round-trip decimal for finite values; `inf`, `-inf`, `nan` otherwise.
pub(crate) fn fmt_num<T: Scalar>(v: T) -> String {
    let x = v.to_f64().unwrap_or(f64::NAN);
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

/// Strict "better than" used for the argmin: converged rows first, then
/// smaller AICc, smaller P_eff, lexicographically smaller tuple, smaller k.
fn better<T: Scalar>(a: &SelectionRow<T>, b: &SelectionRow<T>) -> bool {
    use std::cmp::Ordering::*;
    if a.converged != b.converged {
        return a.converged;
    }
    match a.aicc.partial_cmp(&b.aicc) {
        Some(Less) => return true,
        Some(Greater) => return false,
        _ => {}
    }
    if a.p_eff != b.p_eff {
        return a.p_eff < b.p_eff;
    }
    for (x, y) in a.penalties.iter().zip(b.penalties.iter()) {
        match x.partial_cmp(y) {
            Some(Less) => return true,
            Some(Greater) => return false,
            _ => {}
        }
    }
    a.k < b.k
}

/// Index of the selected row under [`better`]; 0 for an empty slice.
pub(crate) fn argmin_row<T: Scalar>(rows: &[SelectionRow<T>]) -> usize {
    let mut best = 0;
    for i in 1..rows.len() {
        if better(&rows[i], &rows[best]) {
            best = i;
        }
    }
    best
}

type Key = (usize, [usize; 4]);

struct Evaluator<'a, T: Scalar> {
    data: &'a Dataset<T>,
    grid: &'a GridSpec<T>,
    init: &'a InitSpec<T>,
    opts: &'a ConvergenceOpts<T>,
    done: BTreeMap<Key, (SelectionRow<T>, Option<FitResult<T>>)>,
}

impl<'a, T: Scalar> Evaluator<'a, T> {
    fn fit_one(&self, key: Key) -> Result<(SelectionRow<T>, Option<FitResult<T>>)> {
        let (k, idx) = key;
        let dims = self.data.dims().with_k(k)?;
        let data = self.data.clone().with_k(k)?;
        let pen = self.grid.penalties(idx)?;
        let n_obs = observation_count(&dims);
        let init = match self.init {
            InitSpec::Explicit(p) if p.k() != k => InitSpec::DataDriven,
            other => other.clone(),
        };
        match em_fit(&data, &dims, &pen, &init, self.opts) {
            Ok(fit) => {
                let p_eff = effective_params(&fit.params);
                let loglik = fit.final_loglik();
                let row = SelectionRow {
                    penalties: pen.as_array(),
                    k,
                    loglik,
                    p_eff,
                    n_obs,
                    aicc: aicc(loglik, p_eff, n_obs),
                    converged: fit.converged,
                    n_iter: fit.n_iter,
                };
                Ok((row, Some(fit)))
            }
            Err(NetinfError::Diverged { iteration, .. }) => Ok((
                SelectionRow {
                    penalties: pen.as_array(),
                    k,
                    loglik: lit(f64::NEG_INFINITY),
                    p_eff: 0,
                    n_obs,
                    aicc: lit(f64::INFINITY),
                    converged: false,
                    n_iter: iteration,
                },
                None,
            )),
            Err(e) => Err(e),
        }
    }

    /// Evaluates every key not seen yet; fits run in parallel and are
    /// stored in key order.
    fn evaluate(&mut self, keys: &[Key]) -> Result<()> {
        let mut todo: Vec<Key> = keys.iter().copied().filter(|k| !self.done.contains_key(k)).collect();
        todo.sort();
        todo.dedup();
        let results: Vec<Result<(SelectionRow<T>, Option<FitResult<T>>)>> =
            todo.par_iter().map(|&key| self.fit_one(key)).collect();
        for (key, res) in todo.into_iter().zip(results) {
            self.done.insert(key, res?);
        }
        Ok(())
    }

    fn best_of(&self, keys: &[Key]) -> Key {
        let mut best = keys[0];
        for &key in &keys[1..] {
            if better(&self.done[&key].0, &self.done[&best].0) {
                best = key;
            }
        }
        best
    }
}

fn cross_product(lens: [usize; 4]) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..lens[0] {
        for b in 0..lens[1] {
            for c in 0..lens[2] {
                for d in 0..lens[3] {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

const MAX_COORDINATE_SWEEPS: usize = 3;

/// Runs EM over the budget grid (and hidden dimensions) and returns the
/// AICc table with the fit of the selected row.
///
/// Coordinate search starts from the largest value on every axis and
/// updates one axis at a time to its best value, for at most three sweeps
/// or until a sweep leaves the tuple unchanged.
pub fn select_model<T: Scalar>(
    data: &Dataset<T>,
    dims: &Dims,
    grid: &GridSpec<T>,
    init: &InitSpec<T>,
    opts: &ConvergenceOpts<T>,
) -> Result<(SelectionTable<T>, FitResult<T>)> {
    let dd = data.dims();
    if dd.p != dims.p || dd.n_times != dims.n_times || dd.n_reps != dims.n_reps {
        return Err(NetinfError::DimensionMismatch(
            "dataset dimensions differ from the requested dims".into(),
        ));
    }
    let ks = grid.k_values.clone().unwrap_or_else(|| vec![dims.k]);
    let lens = grid.axes.each_ref().map(Vec::len);
    let mut ev = Evaluator {
        data,
        grid,
        init,
        opts,
        done: BTreeMap::new(),
    };

    for &k in &ks {
        match grid.search {
            SearchMode::FullCross => {
                let keys: Vec<Key> = cross_product(lens).into_iter().map(|idx| (k, idx)).collect();
                ev.evaluate(&keys)?;
            }
            SearchMode::CoordinateDescent => {
                let mut current = lens.map(|n| n - 1);
                ev.evaluate(&[(k, current)])?;
                for _ in 0..MAX_COORDINATE_SWEEPS {
                    let before = current;
                    for axis in 0..4 {
                        let keys: Vec<Key> = (0..lens[axis])
                            .map(|i| {
                                let mut idx = current;
                                idx[axis] = i;
                                (k, idx)
                            })
                            .collect();
                        ev.evaluate(&keys)?;
                        current = ev.best_of(&keys).1;
                    }
                    if current == before {
                        break;
                    }
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(ev.done.len());
    let mut fits = Vec::with_capacity(ev.done.len());
    for (_, (row, fit)) in ev.done {
        rows.push(row);
        fits.push(fit);
    }
    let best_index = argmin_row(&rows);
    if !rows[best_index].converged {
        return Err(NetinfError::NoConvergedRows {
            n_rows: rows.len(),
            table_csv: render_rows(&rows),
        });
    }
    let best_fit = fits[best_index]
        .take()
        .expect("converged rows always carry their fit");
    let table = SelectionTable {
        rows,
        best_index,
        mode: grid.mode,
    };
    Ok((table, best_fit))
}
