//! Small dense linear algebra: row-major matrices, packed lower-triangular
//! factors and Cholesky solves. Sizes here are tiny (a handful of
//! parameters), so everything is plain loops.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::identity(n);
        m.scale(s);
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        crate::error::ensure_len("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            crate::error::ensure_len("matrix row", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty-column matrix would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        crate::error::ensure_len("matrix row", self.cols, row.len())?;
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.iter_rows().map(|r| dot(r, x)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, f64::max)
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Number of entries in a packed `n x n` lower triangle.
pub const fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`packed_len`], if `len` is a triangular number.
pub fn dim_from_packed(len: usize) -> Option<usize> {
    let mut n = 0;
    while packed_len(n) < len {
        n += 1;
    }
    (packed_len(n) == len).then_some(n)
}

/// Index of `(i, j)`, `j <= i`, in row-major packed storage.
#[inline]
pub const fn packed_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Lower-triangular matrix packed row by row: `L00, L10, L11, L20, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerTri {
    n: usize,
    data: Vec<f64>,
}

impl LowerTri {
    pub fn from_packed(n: usize, data: Vec<f64>) -> Result<Self> {
        crate::error::ensure_len("packed lower triangle", packed_len(n), data.len())?;
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[packed_index(i, j)]
        }
    }

    pub fn diag(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.data[packed_index(i, i)])
    }

    /// `L L^T` as a dense matrix.
    pub fn gram(&self) -> Matrix {
        let n = self.n;
        let mut f = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += self.get(i, k) * self.get(j, k);
                }
                f[(i, j)] = s;
                f[(j, i)] = s;
            }
        }
        f
    }

    /// Adds `L L^T` into `acc`.
    pub fn add_gram_into(&self, acc: &mut Matrix) {
        let n = self.n;
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += self.get(i, k) * self.get(j, k);
                }
                acc[(i, j)] += s;
                if i != j {
                    acc[(j, i)] += s;
                }
            }
        }
    }

    /// `ln det(L L^T) = 2 sum ln L_ii`.
    pub fn log_det_gram(&self) -> f64 {
        2.0 * self.diag().map(math::ln).sum::<f64>()
    }

    /// Cheap condition estimate of `L L^T` from the factor's diagonal. It is a
    /// lower bound on the true 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let (lo, hi) = self
            .diag()
            .map(math::abs)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
                (lo.min(d), hi.max(d))
            });
        let r = hi / lo;
        r * r
    }

    /// Solves `L L^T x = b` by forward then backward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.get(i, k) * y[k];
            }
            y[i] = s / self.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.get(k, i) * y[k];
            }
            y[i] = s / self.get(i, i);
        }
        y
    }

    /// `(L L^T)^{-1}`, built column by column from [`solve`](Self::solve).
    pub fn inverse_gram(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Cholesky factorization of a symmetric matrix; only the lower triangle of
/// `a` is read.
pub fn cholesky(a: &Matrix) -> Result<LowerTri> {
    let n = a.rows();
    crate::error::ensure_len("cholesky (square)", n, a.cols())?;
    let mut l = vec![0.0; packed_len(n)];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[packed_index(i, k)] * l[packed_index(j, k)];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                l[packed_index(i, i)] = math::sqrt(s);
            } else {
                l[packed_index(i, j)] = s / l[packed_index(j, j)];
            }
        }
    }
    Ok(LowerTri { n, data: l })
}

/// Cholesky with a single diagonal-jitter retry: on failure, factor
/// `A + eps I` with `eps = 1e-10 trace(A) / n`.
pub fn cholesky_guarded(a: &Matrix) -> Result<LowerTri> {
    match cholesky(a) {
        Ok(l) => Ok(l),
        Err(Error::NotPositiveDefinite) => {
            let n = a.rows();
            let eps = 1e-10 * a.trace() / n as f64;
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            log::warn!("Fisher factorization failed; retrying with jitter {eps:e}");
            let mut b = a.clone();
            for i in 0..n {
                b[(i, i)] += eps;
            }
            cholesky(&b)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_layout_is_row_major() {
        assert_eq!(packed_index(0, 0), 0);
        assert_eq!(packed_index(1, 0), 1);
        assert_eq!(packed_index(1, 1), 2);
        assert_eq!(packed_index(2, 0), 3);
        assert_eq!(packed_index(2, 2), 5);
        assert_eq!(dim_from_packed(6), Some(3));
        assert_eq!(dim_from_packed(5), None);
        assert_eq!(dim_from_packed(0), Some(0));
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = Matrix::from_rows(&[
            vec![4.0, 2.0, 0.4],
            vec![2.0, 5.0, 1.0],
            vec![0.4, 1.0, 3.0],
        ])
        .unwrap();
        let l = cholesky(&a).unwrap();
        assert!(l.gram().max_abs_diff(&a) < 1e-14);
        let x = l.solve(&[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - e).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(cholesky(&a), Err(Error::NotPositiveDefinite));
        assert_eq!(cholesky_guarded(&a), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(cholesky(&a).is_err());
        let l = cholesky_guarded(&a).unwrap();
        assert!(l.diag().all(|d| d > 0.0));
    }

    #[test]
    fn inverse_gram_is_inverse() {
        let a = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let inv = cholesky(&a).unwrap().inverse_gram();
        let mut prod = Matrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                prod[(i, j)] = (0..2).map(|k| a[(i, k)] * inv[(k, j)]).sum();
            }
        }
        assert!(prod.max_abs_diff(&Matrix::identity(2)) < 1e-14);
    }
}
