//! Minimal dense linear algebra: the row-major [`Matrix`] carrier, symmetric
//! eigendecomposition, thin SVD, and deterministic random matrix generation.
//!
//! Decompositions are backed by built-in Jacobi routines rather than a host
//! LAPACK so that results are reproducible bit-for-bit across platforms; the
//! contract is the reconstruction tolerance, not the algorithm.

mod decomp;
pub(crate) mod rng;

pub use decomp::{sym_eig, svd};
pub use rng::{mix_seed, rand_matrix, RandKind};

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense 2-D array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from row-major data, checking length and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite entry in matrix".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for results of arithmetic that is known finite-in,
    /// finite-out. Skips validation.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    /// Square matrix with `d` on the diagonal.
    pub fn from_diag(d: &[T]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = d[i];
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = vec![T::zero(); self.rows * rhs.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let acc = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in acc.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Self::from_raw(self.rows, rhs.cols, out)
    }

    /// `self * self^T`, computed symmetrically so the result is exactly
    /// symmetric in floating point.
    pub fn gram_rows(&self) -> Self {
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let a = &self.data[i * self.cols..(i + 1) * self.cols];
                let b = &self.data[j * self.cols..(j + 1) * self.cols];
                let s = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    /// `self^T * self`, exactly symmetric.
    pub fn gram_cols(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = T::zero();
                for k in 0..self.rows {
                    s += self.data[k * self.cols + i] * self.data[k * self.cols + j];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), other.shape(), "zip_map shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_raw(self.rows, self.cols, data)
    }

    /// In-place EMA: `self <- beta * self + (1 - beta) * other`.
    pub fn ema_update(&mut self, other: &Self, beta: T) {
        assert_eq!(self.shape(), other.shape(), "ema shape mismatch");
        let one_minus = T::one() - beta;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = beta * *a + one_minus * b;
        }
    }

    /// In-place heavy-ball accumulation: `self <- beta * self + other`.
    pub fn momentum_update(&mut self, other: &Self, beta: T) {
        assert_eq!(self.shape(), other.shape(), "momentum shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = beta * *a + b;
        }
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "dot shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn frobenius_norm(&self) -> T {
        self.dot(self).sqrt()
    }

    /// Frobenius norm divided by the square root of the element count.
    pub fn rms(&self) -> T {
        self.frobenius_norm() / T::from_usize(self.rows * self.cols).sqrt()
    }

    pub fn trace(&self) -> T {
        assert!(self.is_square(), "trace of non-square matrix");
        (0..self.rows).fold(T::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    /// Max-abs entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    /// Scales row `i` by `s[i]`.
    pub fn scale_rows(&self, s: &[T]) -> Self {
        assert_eq!(s.len(), self.rows, "scale_rows length mismatch");
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s[i])
    }

    /// Scales column `j` by `s[j]`.
    pub fn scale_cols(&self, s: &[T]) -> Self {
        assert_eq!(s.len(), self.cols, "scale_cols length mismatch");
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s[j])
    }

    /// `(self + self^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        assert!(self.is_square(), "symmetrize non-square matrix");
        let half = T::from_f64(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)]) * half
        })
    }

    /// First `k` columns as a new matrix.
    pub fn first_cols(&self, k: usize) -> Self {
        assert!(k <= self.cols);
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }
}

impl<T: Scalar> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl<T: Scalar> Mul<T> for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: T) -> Matrix<T> {
        self.scale(rhs)
    }
}

/// Symmetric eigendecomposition result. Eigenvalues are sorted descending and
/// each eigenvector's largest-magnitude entry is forced non-negative so logs
/// and tests are reproducible.
#[derive(Clone, Debug)]
pub struct EigDecomp<T> {
    /// Orthogonal matrix whose columns are eigenvectors.
    pub vectors: Matrix<T>,
    /// Eigenvalues, descending.
    pub values: Vec<T>,
}

impl<T: Scalar> EigDecomp<T> {
    /// `vectors * diag(values) * vectors^T`.
    pub fn reconstruct(&self) -> Matrix<T> {
        self.vectors
            .scale_cols(&self.values)
            .matmul(&self.vectors.transpose())
    }
}

/// Thin SVD result: `u * diag(singular_values) * v^T` reconstructs the input.
#[derive(Clone, Debug)]
pub struct SvdDecomp<T> {
    pub u: Matrix<T>,
    /// Singular values, descending and non-negative; `min(rows, cols)` of them.
    pub singular_values: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> SvdDecomp<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        self.u
            .scale_cols(&self.singular_values)
            .matmul(&self.v.transpose())
    }
}
