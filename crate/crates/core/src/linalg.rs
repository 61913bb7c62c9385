//! Small dense linear algebra: row-major matrices, Cholesky factorization with
//! jitter escalation, and triangular solves.
//!
//! The matrices involved are tiny (kernel Grams up to a few hundred rows, batch
//! covariances up to 16), so a straightforward dense implementation is both
//! simpler and faster than pulling in a general linear-algebra stack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    /// Zero-filled matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    /// Builds from a row-major data vector. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    /// Builds from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// Matrix-vector product `A x`.
    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }
}

/// Dot product of two equal-length slices.
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` if a
/// non-positive pivot is encountered.
pub fn cholesky<F: Real>(a: &Matrix<F>) -> Option<Matrix<F>> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "cholesky requires a square matrix");
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s = s - l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= F::zero() || !s.is_finite() {
                    return None;
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Cholesky with diagonal jitter escalation.
///
/// Tries the factorization as-is, then with `jitter * mean(diag)` added to the
/// diagonal for `jitter` in `{1e-8, 1e-7, ..., 1e-4}`. Returns the factor and
/// the jitter that succeeded (zero when none was needed).
pub fn cholesky_with_jitter<F: Real>(a: &Matrix<F>) -> Result<(Matrix<F>, F)> {
    if let Some(l) = cholesky(a) {
        return Ok((l, F::zero()));
    }
    let n = a.rows();
    let mean_diag = (0..n).map(|i| a.get(i, i)).sum::<F>() / F::of(n.max(1) as f64);
    let scale = if mean_diag > F::zero() { mean_diag } else { F::one() };
    let mut jitter = 1e-8;
    while jitter <= 1.0001e-4 {
        let mut b = a.clone();
        for i in 0..n {
            b.set(i, i, a.get(i, i) + F::of(jitter) * scale);
        }
        if let Some(l) = cholesky(&b) {
            return Ok((l, F::of(jitter) * scale));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite { last_jitter: 1e-4 })
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower<F: Real>(l: &Matrix<F>, b: &[F]) -> Vec<F> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut x = vec![F::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l.get(i, k) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Solves `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_transpose<F: Real>(l: &Matrix<F>, b: &[F]) -> Vec<F> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut x = vec![F::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Solves `(L L^T) x = b` given the Cholesky factor `L`.
pub fn cholesky_solve<F: Real>(l: &Matrix<F>, b: &[F]) -> Vec<F> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// Inverse of `L L^T` given the Cholesky factor `L`.
pub fn cholesky_inverse<F: Real>(l: &Matrix<F>) -> Matrix<F> {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![F::zero(); n];
    for j in 0..n {
        e[j] = F::one();
        let col = cholesky_solve(l, &e);
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
        e[j] = F::zero();
    }
    inv
}
