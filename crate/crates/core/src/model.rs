//! Model definition, dimension bookkeeping, and synthetic data generation.
//!
//! Matrix shapes: `F` is k×k, `A` is k×p, `Z` is p×k (rows are genes,
//! columns are hidden regulators), `B` is p×p and `Q0` is k×k. The system
//! and measurement noise covariances are fixed to the identity and carry no
//! stored state. With those fixed, `A` and `Z` are still only identified up
//! to an orthogonal rotation of the hidden state.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{all_finite, asymmetry, spectral_radius};
use crate::{lit, NetinfError, Result, Scalar};

/// Problem dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    /// Observed genes.
    pub p: usize,
    /// Hidden state dimension.
    pub k: usize,
    /// Time points per replicate.
    pub n_times: usize,
    /// Replicates.
    pub n_reps: usize,
}

impl Dims {
    pub fn new(p: usize, k: usize, n_times: usize, n_reps: usize) -> Result<Self> {
        if p == 0 || k == 0 || n_reps == 0 || n_times < 2 {
            return Err(NetinfError::InvalidArgument(format!(
                "dims require p >= 1, k >= 1, T >= 2, n_R >= 1 (got p={p}, k={k}, T={n_times}, n_R={n_reps})"
            )));
        }
        Ok(Self { p, k, n_times, n_reps })
    }

    pub fn with_k(self, k: usize) -> Result<Self> {
        Self::new(self.p, k, self.n_times, self.n_reps)
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    pub fn observation_count(&self) -> usize {
        observation_count(self)
    }
}

/// Dense parameter count `p² + 2kp + k²`.
pub fn param_count(dims: &Dims) -> usize {
    let (p, k) = (dims.p, dims.k);
    p * p + 2 * k * p + k * k
}

/// Total number of scalar observations `p·T·n_R`.
pub fn observation_count(dims: &Dims) -> usize {
    dims.p * dims.n_times * dims.n_reps
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar> {
    pub f: DMatrix<T>,
    pub a: DMatrix<T>,
    pub z: DMatrix<T>,
    pub b: DMatrix<T>,
    pub q0: DMatrix<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Validates shapes, finiteness and the positive definiteness of `Q0`.
    pub fn new(
        f: DMatrix<T>,
        a: DMatrix<T>,
        z: DMatrix<T>,
        b: DMatrix<T>,
        q0: DMatrix<T>,
    ) -> Result<Self> {
        let params = Self { f, a, z, b, q0 };
        params.validate()?;
        Ok(params)
    }

    /// All interaction matrices zero, `Q0 = I`.
    pub fn zeros(p: usize, k: usize) -> Self {
        Self {
            f: DMatrix::zeros(k, k),
            a: DMatrix::zeros(k, p),
            z: DMatrix::zeros(p, k),
            b: DMatrix::zeros(p, p),
            q0: DMatrix::identity(k, k),
        }
    }

    pub fn p(&self) -> usize {
        self.b.nrows()
    }

    pub fn k(&self) -> usize {
        self.f.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.f.nrows();
        let p = self.b.nrows();
        let shapes = [
            ("F", &self.f, k, k),
            ("A", &self.a, k, p),
            ("Z", &self.z, p, k),
            ("B", &self.b, p, p),
            ("Q0", &self.q0, k, k),
        ];
        for (name, m, r, c) in shapes {
            if m.shape() != (r, c) {
                return Err(NetinfError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !all_finite(m) {
                return Err(NetinfError::NonFinite(format!("parameter matrix {name}")));
            }
        }
        if k == 0 || p == 0 {
            return Err(NetinfError::InvalidArgument("p and k must be positive".into()));
        }
        if asymmetry(&self.q0) > lit(1e-12) {
            return Err(NetinfError::InvalidArgument("Q0 is not symmetric".into()));
        }
        if self.q0.clone().cholesky().is_none() {
            return Err(NetinfError::NotPositiveDefinite("Q0".into()));
        }
        Ok(())
    }

    pub fn check_dims(&self, dims: &Dims) -> Result<()> {
        if self.p() != dims.p || self.k() != dims.k {
            return Err(NetinfError::DimensionMismatch(format!(
                "parameters have p={}, k={} but dims have p={}, k={}",
                self.p(),
                self.k(),
                dims.p,
                dims.k
            )));
        }
        Ok(())
    }

    pub fn dims_with(&self, n_times: usize, n_reps: usize) -> Result<Dims> {
        Dims::new(self.p(), self.k(), n_times, n_reps)
    }

    /// Converts to another scalar type through `f64`.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let c = |m: &DMatrix<T>| m.map(|v| lit::<U>(v.to_f64().unwrap_or(f64::NAN)));
        ModelParams {
            f: c(&self.f),
            a: c(&self.a),
            z: c(&self.z),
            b: c(&self.b),
            q0: c(&self.q0),
        }
    }
}

/// Replicated expression series: `values[r][t]` is the p-vector observed
/// for replicate `r` at time index `t` (time `t + 1` in model notation).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    values: Vec<Vec<DVector<T>>>,
    gene_names: Vec<String>,
    dims: Dims,
}

impl<T: Scalar> Dataset<T> {
    /// `k` is carried along in the returned dims and may be changed later
    /// through [`Dims::with_k`].
    pub fn new(values: Vec<Vec<DVector<T>>>, gene_names: Vec<String>, k: usize) -> Result<Self> {
        let n_reps = values.len();
        let n_times = values.first().map_or(0, Vec::len);
        let p = gene_names.len();
        let dims = Dims::new(p, k, n_times, n_reps)?;
        for (r, series) in values.iter().enumerate() {
            if series.len() != n_times {
                return Err(NetinfError::DimensionMismatch(format!(
                    "replicate {r} has {} time points, expected {n_times}",
                    series.len()
                )));
            }
            for (t, y) in series.iter().enumerate() {
                if y.len() != p {
                    return Err(NetinfError::DimensionMismatch(format!(
                        "replicate {r}, time {t}: {} values for {p} genes",
                        y.len()
                    )));
                }
                if !y.iter().all(|v| v.is_finite()) {
                    return Err(NetinfError::NonFinite(format!(
                        "dataset at replicate {r}, time {t}"
                    )));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in &gene_names {
            if !seen.insert(name.as_str()) {
                return Err(NetinfError::Data(format!("duplicate gene name '{name}'")));
            }
        }
        Ok(Self { values, gene_names, dims })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn with_k(mut self, k: usize) -> Result<Self> {
        self.dims = self.dims.with_k(k)?;
        Ok(self)
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn replicates(&self) -> &[Vec<DVector<T>>] {
        &self.values
    }

    pub fn replicate(&self, r: usize) -> &[DVector<T>] {
        &self.values[r]
    }

    /// Subtracts each gene's grand mean over all replicates and times.
    pub fn centered(&self) -> Self {
        let mut mean = DVector::zeros(self.dims.p);
        for series in &self.values {
            for y in series {
                mean += y;
            }
        }
        let count = lit::<T>((self.dims.n_reps * self.dims.n_times) as f64);
        mean /= count;
        let values = self
            .values
            .iter()
            .map(|series| series.iter().map(|y| y - &mean).collect())
            .collect();
        Self {
            values,
            gene_names: self.gene_names.clone(),
            dims: self.dims,
        }
    }

    /// Dataset made of the given replicate indices (repeats allowed).
    pub fn select_replicates(&self, indices: &[usize]) -> Result<Self> {
        let values = indices
            .iter()
            .map(|&r| {
                self.values.get(r).cloned().ok_or_else(|| {
                    NetinfError::InvalidArgument(format!("replicate index {r} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values, self.gene_names.clone(), self.dims.k)
    }
}

/// Simulated hidden states; `states[r][t]` for t = 0..=T, index 0 is θ0.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTrajectory<T: Scalar> {
    pub states: Vec<Vec<DVector<T>>>,
}

pub fn default_gene_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("g{i}")).collect()
}

/// Per-replicate generator: stream `r` of the ChaCha stream seeded by `seed`.
fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

fn normal_vec<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> DVector<T> {
    DVector::from_fn(n, |_, _| lit::<T>(rng.sample::<f64, _>(StandardNormal)))
}

/// Draws `n_reps` independent replicates of length `n_times` from the model.
pub fn simulate<T: Scalar>(
    params: &ModelParams<T>,
    dims: &Dims,
    seed: u64,
) -> Result<(Dataset<T>, HiddenTrajectory<T>)> {
    params.check_dims(dims)?;
    let q0_chol = params
        .q0
        .clone()
        .cholesky()
        .ok_or_else(|| NetinfError::NotPositiveDefinite("Q0".into()))?;
    let l0 = q0_chol.l();
    let mut values = Vec::with_capacity(dims.n_reps);
    let mut states = Vec::with_capacity(dims.n_reps);
    for r in 0..dims.n_reps {
        let mut rng = replicate_rng(seed, r);
        let mut theta = &l0 * normal_vec::<T>(&mut rng, dims.k);
        let mut y_prev = DVector::<T>::zeros(dims.p);
        let mut series = Vec::with_capacity(dims.n_times);
        let mut hidden = Vec::with_capacity(dims.n_times + 1);
        hidden.push(theta.clone());
        for _ in 0..dims.n_times {
            let eta = normal_vec::<T>(&mut rng, dims.k);
            let xi = normal_vec::<T>(&mut rng, dims.p);
            theta = &params.f * &theta + &params.a * &y_prev + eta;
            let y = &params.z * &theta + &params.b * &y_prev + xi;
            hidden.push(theta.clone());
            series.push(y.clone());
            y_prev = y;
        }
        values.push(series);
        states.push(hidden);
    }
    let data = Dataset::new(values, default_gene_names(dims.p), dims.k)?;
    Ok((data, HiddenTrajectory { states }))
}

/// Random sparse parameters for support-recovery studies.
///
/// Each entry of F, A, Z, B is nonzero with probability `density`, with
/// value uniform in `[-scale, scale]`. `F` is rescaled to spectral radius
/// at most 0.9 and `Q0 = I`.
pub fn random_sparse_params<T: Scalar>(
    dims: &Dims,
    density: f64,
    scale: f64,
    seed: u64,
) -> Result<ModelParams<T>> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(NetinfError::InvalidArgument(format!(
            "density must be in (0, 1], got {density}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(NetinfError::InvalidArgument(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| {
        // Row-major draw order, independent of nalgebra's storage order.
        let mut m = DMatrix::<T>::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let keep = rng.random::<f64>() < density;
                let v = rng.random_range(-scale..=scale);
                if keep {
                    m[(i, j)] = lit(v);
                }
            }
        }
        m
    };
    let (p, k) = (dims.p, dims.k);
    let mut f = draw(k, k);
    let a = draw(k, p);
    let z = draw(p, k);
    let b = draw(p, p);
    let rho = spectral_radius(&f);
    let cap = lit::<T>(0.9);
    if rho > cap {
        f *= cap / rho;
    }
    ModelParams::new(f, a, z, b, DMatrix::identity(k, k))
}
