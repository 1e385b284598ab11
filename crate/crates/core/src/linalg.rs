//! Small dense matrices (dimension is the spatial dimension, so single
//! digits). Everything is row-major `Vec<f64>` with explicit loops; no
//! external linear algebra is needed at these sizes.

use crate::fp;
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidMap(format!(
                "non-finite entry in {n}x{n} matrix"
            )));
        }
        Ok(Matrix { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix {
            n,
            data: vec![0.0; n * n],
        };
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += self.data[i * self.n + j] * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec(x, &mut out);
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut lu = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let mut piv = col;
            let mut best = fp::abs(lu[col * n + col]);
            for r in col + 1..n {
                let v = fp::abs(lu[r * n + col]);
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                return 0.0;
            }
            if piv != col {
                for j in 0..n {
                    lu.swap(col * n + j, piv * n + j);
                }
                det = -det;
            }
            let d = lu[col * n + col];
            det *= d;
            for r in col + 1..n {
                let f = lu[r * n + col] / d;
                lu[r * n + col] = 0.0;
                for j in col + 1..n {
                    lu[r * n + j] -= f * lu[col * n + j];
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut inv = Matrix::identity(n).data;
        for col in 0..n {
            let mut piv = col;
            let mut best = fp::abs(a[col * n + col]);
            for r in col + 1..n {
                let v = fp::abs(a[r * n + col]);
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                return Err(Error::InvalidMap("matrix is singular".into()));
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                    inv.swap(col * n + j, piv * n + j);
                }
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= d;
                inv[col * n + j] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] -= f * a[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
        Ok(Matrix { n, data: inv })
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        fp::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Operator 2-norm (largest singular value) by power iteration on
    /// `A^T A`, restarted from every basis vector so a degenerate start
    /// cannot miss the top eigenspace.
    pub fn op_norm(&self) -> f64 {
        let n = self.n;
        let ata = self.transpose().matmul(self);
        let mut best = 0.0f64;
        let mut v = vec![0.0; n];
        let mut w = vec![0.0; n];
        for start in 0..n {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = if i == start { 1.0 } else { 0.0 };
            }
            let mut lambda = 0.0;
            for _ in 0..200 {
                ata.matvec(&v, &mut w);
                let norm = fp::sqrt(w.iter().map(|x| x * x).sum());
                if norm == 0.0 {
                    lambda = 0.0;
                    break;
                }
                for (vi, wi) in v.iter_mut().zip(w.iter()) {
                    *vi = wi / norm;
                }
                lambda = norm;
            }
            if lambda > best {
                best = lambda;
            }
        }
        fp::sqrt(best)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| fp::abs(a - b))
            .fold(0.0, f64::max)
    }
}
