//! Small dense linear algebra: a row-major matrix and Gaussian elimination
//! with partial pivoting. Sizes here are tens, so nothing clever is needed.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self * x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = crate::math::dot(self.row(i), x);
        }
    }

    /// `out = self^T * y`
    pub fn mul_t_vec(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, yi) in y.iter().enumerate() {
            if *yi != 0.0 {
                crate::math::axpy(*yi, self.row(i), out);
            }
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| alpha * v).collect() }
    }

    pub fn is_finite(&self) -> bool {
        crate::math::all_finite(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        crate::math::norm_inf(&self.data)
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `pivot_tol` times the largest
/// entry of `a`.
pub fn solve(mut a: Matrix, mut b: Vec<f64>, pivot_tol: f64) -> Option<Vec<f64>> {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    assert_eq!(b.len(), n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (piv, piv_abs) =
            (col..n)
                .map(|r| (r, a[(r, col)].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(piv_abs > pivot_tol * scale) {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.data.swap(piv * n + j, col * n + j);
            }
            b.swap(piv, col);
        }
        let p = a[(col, col)];
        for r in col + 1..n {
            let factor = a[(r, col)] / p;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[(r, j)] -= factor * a[(col, j)];
            }
            b[r] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[(col, j)] * b[j];
        }
        b[col] = acc / a[(col, col)];
    }
    if crate::math::all_finite(&b) {
        Some(b)
    } else {
        None
    }
}

/// Largest eigenvalue of `a a^T` by power iteration on `a^T a`.
pub fn gram_spectral_norm(a: &Matrix, iters: usize) -> f64 {
    let (m, d) = (a.rows(), a.cols());
    if m == 0 || d == 0 {
        return 0.0;
    }
    let mut x: Vec<f64> = (0..d).map(|j| 1.0 + 0.1 * (j as f64)).collect();
    let mut ax = vec![0.0; m];
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = crate::math::norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        crate::math::scale(1.0 / nx, &mut x);
        a.mul_vec(&x, &mut ax);
        a.mul_t_vec(&ax, &mut x);
        est = crate::math::norm(&x);
    }
    est
}


/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off <= 1e-30 * (1.0 + m.max_abs() * m.max_abs()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + crate::math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / crate::math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    eig
}

#[cfg(test)]
mod eigen_tests {
    use super::*;

    #[test]
    fn jacobi_on_known_spectrum() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3
        let a = Matrix::from_rows(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let e = symmetric_eigenvalues(&a);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
    }
}
