//! Small dense linear algebra: row-major matrices, LU with partial pivoting,
//! cyclic Jacobi for symmetric matrices and spectral pseudo-inverses.
//!
//! Everything here is sized for desk-scale problems (a few hundred rows at most).

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::math::{dot, sqrt};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
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

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows. An empty list yields a `0 x cols` matrix.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
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

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ * y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += yi * a;
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `selfᵀ diag(w) self`, the weighted Gram matrix of the columns.
    pub fn weighted_gram(&self, w: &[f64]) -> Matrix {
        assert_eq!(w.len(), self.rows);
        let p = self.cols;
        let mut g = Matrix::zeros(p, p);
        for (x, &wx) in w.iter().enumerate() {
            let r = self.row(x);
            for i in 0..p {
                let ri = wx * r[i];
                if ri == 0.0 {
                    continue;
                }
                for j in 0..p {
                    g[(i, j)] += ri * r[j];
                }
            }
        }
        g
    }

    /// `self diag(w) selfᵀ`, the weighted Gram matrix of the rows.
    pub fn weighted_gram_rows(&self, w: &[f64]) -> Matrix {
        assert_eq!(w.len(), self.cols);
        let m = self.rows;
        let mut g = Matrix::zeros(m, m);
        for i in 0..m {
            let ri = self.row(i);
            for j in i..m {
                let rj = self.row(j);
                let v: f64 = ri.iter().zip(rj).zip(w).map(|((a, b), c)| a * b * c).sum();
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Columns selected by `idx`, in order.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (k, &j) in idx.iter().enumerate() {
                out[(i, k)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        sqrt(dot(&self.data, &self.data))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    /// Returns `None` if a pivot falls below `1e-14` times the largest entry.
    pub fn factor(a: &Matrix) -> Option<Self> {
        assert_eq!(a.rows(), a.cols(), "LU needs a square matrix");
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pv <= 1e-14 * scale {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solves `selfᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Uᵀ z = b
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * z[j];
            }
            z[i] = s / self.lu[(i, i)];
        }
        // Lᵀ y = z
        for i in (0..n).rev() {
            let mut s = z[i];
            for j in i + 1..n {
                s -= self.lu[(j, i)] * z[j];
            }
            z[i] = s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }
}

pub fn lu_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    Lu::factor(a).map(|lu| lu.solve(b))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues and a matrix whose columns are the matching orthonormal
/// eigenvectors. Only the upper triangle symmetry is assumed, not checked.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let total = m.frobenius();
    if total == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if sqrt(off) <= 1e-15 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| m[(i, i)]).collect();
    (vals, v)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix, discarding eigenvalues
/// with magnitude at most `rel_tol` times the largest one.
pub fn pinv_symmetric(a: &Matrix, rel_tol: f64) -> Matrix {
    let n = a.rows();
    let (vals, vecs) = symmetric_eigen(a);
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = Matrix::zeros(n, n);
    if top == 0.0 {
        return out;
    }
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= rel_tol * top {
            continue;
        }
        let inv = 1.0 / lam;
        for i in 0..n {
            let vi = vecs[(i, k)] * inv;
            if vi == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += vi * vecs[(j, k)];
            }
        }
    }
    out
}

/// Result of orthonormalizing an affine system `A x = b` row by row.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// Orthonormal rows spanning the row space of the input.
    pub q: Matrix,
    /// Right-hand side transformed alongside `q`.
    pub rhs: Vec<f64>,
    /// Indices of input rows kept as independent.
    pub kept: Vec<usize>,
}

/// Modified Gram-Schmidt over the rows of `[A | b]`.
///
/// Rows whose residual falls below `tol` (relative to the row norm) are dropped
/// as redundant; if the matching right-hand side residual is not also small the
/// system is inconsistent and `None` is returned.
pub fn reduce_rows(a: &Matrix, b: &[f64], tol: f64) -> Option<ReducedSystem> {
    let n = a.cols();
    let mut qs: Vec<Vec<f64>> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut kept = Vec::new();
    for i in 0..a.rows() {
        let mut r = a.row(i).to_vec();
        let mut rb = b[i];
        let norm0 = crate::math::norm2(&r).max(1.0);
        // two passes of MGS for stability
        for _ in 0..2 {
            for (q, beta) in qs.iter().zip(&betas) {
                let c = dot(&r, q);
                for (rv, qv) in r.iter_mut().zip(q) {
                    *rv -= c * qv;
                }
                rb -= c * beta;
            }
        }
        let nr = crate::math::norm2(&r);
        if nr <= tol * norm0 {
            if rb.abs() > 1e3 * tol * (norm0 + b[i].abs()) {
                return None;
            }
            continue;
        }
        for v in r.iter_mut() {
            *v /= nr;
        }
        qs.push(r);
        betas.push(rb / nr);
        kept.push(i);
    }
    Some(ReducedSystem {
        q: Matrix::from_rows(&qs, n),
        rhs: betas,
        kept,
    })
}

/// Numerical rank via Gram-Schmidt on the rows.
pub fn rank(a: &Matrix, tol: f64) -> usize {
    let zeros = vec![0.0; a.rows()];
    reduce_rows(a, &zeros, tol).map_or(0, |r| r.kept.len())
}

/// Orthonormal basis (as columns) of the null space of a matrix with
/// orthonormal rows.
pub fn null_space_of_orthonormal(q: &Matrix) -> Matrix {
    let n = q.cols();
    let mut proj = Matrix::identity(n);
    for i in 0..q.rows() {
        let r = q.row(i);
        for a in 0..n {
            for b in 0..n {
                proj[(a, b)] -= r[a] * r[b];
            }
        }
    }
    let (vals, vecs) = symmetric_eigen(&proj);
    let keep: Vec<usize> = (0..n).filter(|&k| vals[k] > 0.5).collect();
    vecs.select_columns(&keep)
}
