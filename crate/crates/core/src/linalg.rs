//! Small dense helpers shared by the filter, the lasso solver and the EM.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{lit, NetinfError, Result, Scalar};

pub(crate) fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = lit::<T>(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub(crate) fn asymmetry<T: Scalar>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn all_finite<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Cholesky factorization with a single 1e-10 diagonal jitter retry.
pub(crate) fn cholesky_jitter<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<Cholesky<T, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let mut jittered = m.clone();
    for i in 0..jittered.nrows() {
        jittered[(i, i)] += lit(1e-10);
    }
    Cholesky::new(jittered).ok_or_else(|| NetinfError::NotPositiveDefinite(what.to_string()))
}

pub(crate) fn log_det_from_cholesky<T: Scalar>(c: &Cholesky<T, Dyn>) -> T {
    let l = c.l_dirty();
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    acc * lit(2.0)
}

pub(crate) fn l1_norm<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc + x.abs())
}

/// Largest eigenvalue modulus of a square (not necessarily symmetric) matrix.
pub(crate) fn spectral_radius<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    m.complex_eigenvalues()
        .iter()
        .fold(T::zero(), |acc, z| acc.max((z.re * z.re + z.im * z.im).sqrt()))
}

pub(crate) fn outer<T: Scalar>(a: &DVector<T>, b: &DVector<T>) -> DMatrix<T> {
    a * b.transpose()
}
