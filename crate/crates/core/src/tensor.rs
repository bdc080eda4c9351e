//! Dense 3-way tensors and the multilinear primitives the solvers are built on.
//!
//! Storage is row-major with the last axis fastest: entry `(i, j, k)` of a
//! tensor with dims `(I, J, K)` lives at `i*J*K + j*K + k`.
//!
//! Unfolding conventions:
//!
//! * mode 0: `I x (J*K)`, column `j + J*k`
//! * mode 1: `J x (I*K)`, column `i + I*k`
//! * mode 2: `K x (I*J)`, column `i + I*j`
//!
//! With these, `X_(0) = U (W ⊙ V)ᵀ`, `X_(1) = V (W ⊙ U)ᵀ` and
//! `X_(2) = W (V ⊙ U)ᵀ` for a Kruskal tensor with factors `U`, `V`, `W`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFiniteEntry { index: usize },
    #[error("dimensions must be positive, got {0:?}")]
    ZeroDimension(Vec<usize>),
    #[error("invalid mode {0}, expected 0, 1 or 2")]
    InvalidMode(usize),
    #[error("column mismatch: {left} vs {right}")]
    ColumnMismatch { left: usize, right: usize },
    #[error("axis {axis} has {actual} labels but length {expected}")]
    LabelMismatch {
        axis: usize,
        expected: usize,
        actual: usize,
    },
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::ZeroDimension(vec![rows, cols]));
        }
        if data.len() != rows * cols {
            return Err(TensorError::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFiniteEntry { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(TensorError::LengthMismatch {
                    expected: ncols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), ncols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub(crate) fn set_column(&mut self, col: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.rows);
        for (r, v) in values.iter().enumerate() {
            self.set(r, col, *v);
        }
    }

    pub(crate) fn scale_column(&mut self, col: usize, factor: f64) {
        for r in 0..self.rows {
            self.data[r * self.cols + col] *= factor;
        }
    }

    pub fn column_norm(&self, col: usize) -> f64 {
        (0..self.rows)
            .map(|r| self.get(r, col).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `selfᵀ * self`, a `cols x cols` Gram matrix.
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut out = Matrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for a in 0..n {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..n {
                    out.data[a * n + b] += ra * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                out.data[a * n + b] = out.data[b * n + a];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.get(r, c);
            }
        }
        out
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, order: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, order.len());
        for r in 0..self.rows {
            for (c, &src) in order.iter().enumerate() {
                out.data[r * order.len() + c] = self.get(r, src);
            }
        }
        out
    }
}

/// Immutable dense 3-way tensor with dims `(I, J, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense3Tensor {
    dims: [usize; 3],
    data: Vec<f64>,
    labels: Option<[Vec<String>; 3]>,
}

impl Dense3Tensor {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self, TensorError> {
        if dims.contains(&0) {
            return Err(TensorError::ZeroDimension(dims.to_vec()));
        }
        let expected = dims.iter().product();
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFiniteEntry { index });
        }
        Ok(Self {
            dims,
            data,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: [Vec<String>; 3]) -> Result<Self, TensorError> {
        for (axis, l) in labels.iter().enumerate() {
            if l.len() != self.dims[axis] {
                return Err(TensorError::LabelMismatch {
                    axis,
                    expected: self.dims[axis],
                    actual: l.len(),
                });
            }
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[Vec<String>; 3]> {
        self.labels.as_ref()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn unfold(&self, mode: usize) -> Result<Matrix, TensorError> {
        let [ni, nj, nk] = self.dims;
        let (rows, cols) = match mode {
            0 => (ni, nj * nk),
            1 => (nj, ni * nk),
            2 => (nk, ni * nj),
            m => return Err(TensorError::InvalidMode(m)),
        };
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..nk {
                    let v = self.get(i, j, k);
                    let (r, c) = match mode {
                        0 => (i, j + nj * k),
                        1 => (j, i + ni * k),
                        _ => (k, i + ni * j),
                    };
                    out.set(r, c, v);
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Dense3Tensor::unfold`].
    pub fn refold(m: &Matrix, mode: usize, dims: [usize; 3]) -> Result<Self, TensorError> {
        let [ni, nj, nk] = dims;
        let expected = match mode {
            0 => (ni, nj * nk),
            1 => (nj, ni * nk),
            2 => (nk, ni * nj),
            m => return Err(TensorError::InvalidMode(m)),
        };
        if (m.rows(), m.cols()) != expected {
            return Err(TensorError::LengthMismatch {
                expected: expected.0 * expected.1,
                actual: m.rows() * m.cols(),
            });
        }
        let mut data = vec![0.0; ni * nj * nk];
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..nk {
                    let (r, c) = match mode {
                        0 => (i, j + nj * k),
                        1 => (j, i + ni * k),
                        _ => (k, i + ni * j),
                    };
                    data[(i * nj + j) * nk + k] = m.get(r, c);
                }
            }
        }
        Dense3Tensor::new(dims, data)
    }
}

/// Column-wise Kronecker product. Row `a*q + b` of the result pairs row `a`
/// of `a` with row `b` of `b`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix, TensorError> {
    if a.cols() != b.cols() {
        return Err(TensorError::ColumnMismatch {
            left: a.cols(),
            right: b.cols(),
        });
    }
    let (p, q, r) = (a.rows(), b.rows(), a.cols());
    let mut out = Matrix::zeros(p * q, r);
    for ai in 0..p {
        for bi in 0..q {
            let row = ai * q + bi;
            for c in 0..r {
                out.set(row, c, a.get(ai, c) * b.get(bi, c));
            }
        }
    }
    Ok(out)
}

pub fn frobenius_norm(t: &Dense3Tensor) -> f64 {
    t.frobenius_norm()
}

/// Matricized tensor times Khatri-Rao product for `mode`, fused so the
/// Khatri-Rao matrix is never formed. Equivalent to
/// `unfold(mode) * khatri_rao(..)` with the module's column conventions.
pub(crate) fn mttkrp(x: &Dense3Tensor, factors: [&Matrix; 3], mode: usize) -> Matrix {
    let [ni, nj, nk] = x.dims();
    let rank = factors[0].cols();
    let (u, v, w) = (factors[0].data(), factors[1].data(), factors[2].data());
    let xd = x.data();
    let mut out = Matrix::zeros(x.dims()[mode], rank);
    let mut tmp = vec![0.0; rank];
    match mode {
        0 | 1 => {
            for i in 0..ni {
                for j in 0..nj {
                    let base = (i * nj + j) * nk;
                    tmp.iter_mut().for_each(|t| *t = 0.0);
                    for (k, &xv) in xd[base..base + nk].iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &w[k * rank..(k + 1) * rank];
                        for (t, wv) in tmp.iter_mut().zip(wrow) {
                            *t += xv * wv;
                        }
                    }
                    let (dst_row, src) = if mode == 0 {
                        (i, &v[j * rank..(j + 1) * rank])
                    } else {
                        (j, &u[i * rank..(i + 1) * rank])
                    };
                    let dst = &mut out.data_mut()[dst_row * rank..(dst_row + 1) * rank];
                    for ((d, s), t) in dst.iter_mut().zip(src).zip(&tmp) {
                        *d += s * t;
                    }
                }
            }
        }
        _ => {
            let od = out.data_mut();
            for i in 0..ni {
                let urow = &u[i * rank..(i + 1) * rank];
                for j in 0..nj {
                    let vrow = &v[j * rank..(j + 1) * rank];
                    for ((t, a), b) in tmp.iter_mut().zip(urow).zip(vrow) {
                        *t = a * b;
                    }
                    let base = (i * nj + j) * nk;
                    for (k, &xv) in xd[base..base + nk].iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let dst = &mut od[k * rank..(k + 1) * rank];
                        for (d, t) in dst.iter_mut().zip(&tmp) {
                            *d += xv * t;
                        }
                    }
                }
            }
        }
    }
    out
}
