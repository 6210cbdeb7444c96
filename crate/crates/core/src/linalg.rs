//! Dense row-major `f64` matrices and the handful of kernels that forward and
//! backward propagation need.
//!
//! A batch is laid out one sample per row, so an `N x M` matrix holds `N`
//! samples of dimension `M`, and slicing a contiguous run of rows yields a
//! contiguous mini-batch.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tile edge used by [`mat_mul_blocked`].
pub const BLOCK: usize = 64;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Domain(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged or empty input, so
    /// it is meant for literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        assert!(!rows.is_empty(), "from_rows needs at least one row");
        let cols = rows[0].as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data).expect("valid literal matrix")
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies rows `start..end` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Matrix> {
        if start >= end || end > self.rows {
            return Err(Error::Domain(format!(
                "row range {start}..{end} invalid for {} rows",
                self.rows
            )));
        }
        Matrix::new(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    /// Returns a new matrix with the rows reordered so that row `i` of the
    /// result is row `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Matrix> {
        if order.len() != self.rows {
            return Err(Error::Domain(format!(
                "permutation of length {} for {} rows",
                order.len(),
                self.rows
            )));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &src in order {
            if src >= self.rows {
                return Err(Error::Domain(format!("row index {src} out of range")));
            }
            data.extend_from_slice(self.row(src));
        }
        Matrix::new(self.rows, self.cols, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Adds a `1 x cols` row vector to every row.
    pub fn add_row_in_place(&mut self, row: &Matrix) -> Result<()> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::shape("add_row", self.shape(), row.shape()));
        }
        for chunk in self.data.chunks_exact_mut(self.cols) {
            for (x, b) in chunk.iter_mut().zip(&row.data) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn add_in_place(&mut self, other: &Matrix) -> Result<()> {
        self.check_same("add", other)?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
        Ok(())
    }

    /// `self <- self - step * other`.
    pub fn sub_scaled_in_place(&mut self, other: &Matrix, step: f64) -> Result<()> {
        self.check_same("sub_scaled", other)?;
        for (x, g) in self.data.iter_mut().zip(&other.data) {
            *x -= step * g;
        }
        Ok(())
    }

    pub fn div_scalar_in_place(&mut self, divisor: f64) {
        for x in &mut self.data {
            *x /= divisor;
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same("sub", other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    fn check_same(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Reference product: `c[i][j] = sum_k a[i][k] * b[k][j]`, accumulated in
/// ascending `k` for every entry. Loop order is i-k-j for unit-stride access
/// to `b` and `c`; the per-entry summation order is the same as the textbook
/// i-j-k loop.
pub fn mat_mul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape("mat_mul", a.shape(), b.shape()));
    }
    let (n, m, p) = (a.rows, a.cols, b.cols);
    let mut c = vec![0.0; n * p];
    for i in 0..n {
        let c_row = &mut c[i * p..(i + 1) * p];
        for k in 0..m {
            let aik = a.data[i * m + k];
            let b_row = &b.data[k * p..(k + 1) * p];
            for (cij, bkj) in c_row.iter_mut().zip(b_row) {
                *cij += aik * bkj;
            }
        }
    }
    Ok(Matrix {
        rows: n,
        cols: p,
        data: c,
    })
}

/// Cache-blocked product over `BLOCK`-sized tiles. Agrees with [`mat_mul`]
/// to within 1e-12; with ascending k-tiles it is in fact bit-identical.
pub fn mat_mul_blocked(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape("mat_mul_blocked", a.shape(), b.shape()));
    }
    let (n, m, p) = (a.rows, a.cols, b.cols);
    let mut c = vec![0.0; n * p];
    for ii in (0..n).step_by(BLOCK) {
        let i_end = (ii + BLOCK).min(n);
        for kk in (0..m).step_by(BLOCK) {
            let k_end = (kk + BLOCK).min(m);
            for jj in (0..p).step_by(BLOCK) {
                let j_end = (jj + BLOCK).min(p);
                for i in ii..i_end {
                    let c_row = &mut c[i * p + jj..i * p + j_end];
                    for k in kk..k_end {
                        let aik = a.data[i * m + k];
                        let b_row = &b.data[k * p + jj..k * p + j_end];
                        for (cij, bkj) in c_row.iter_mut().zip(b_row) {
                            *cij += aik * bkj;
                        }
                    }
                }
            }
        }
    }
    Ok(Matrix {
        rows: n,
        cols: p,
        data: c,
    })
}

/// Product kernel used by the network; selected at build time.
#[inline]
pub(crate) fn product(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if cfg!(feature = "blocked-matmul") {
        mat_mul_blocked(a, b)
    } else {
        mat_mul(a, b)
    }
}

pub fn transpose(a: &Matrix) -> Matrix {
    let mut data = vec![0.0; a.data.len()];
    for i in 0..a.rows {
        for j in 0..a.cols {
            data[j * a.rows + i] = a.data[i * a.cols + j];
        }
    }
    Matrix {
        rows: a.cols,
        cols: a.rows,
        data,
    }
}

pub fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::shape("hadamard", a.shape(), b.shape()));
    }
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// Column sums as a `1 x cols` matrix.
pub fn col_sum(a: &Matrix) -> Matrix {
    let mut sums = vec![0.0; a.cols];
    for chunk in a.data.chunks_exact(a.cols) {
        for (s, x) in sums.iter_mut().zip(chunk) {
            *s += x;
        }
    }
    Matrix {
        rows: 1,
        cols: a.cols,
        data: sums,
    }
}

/// Column means as a `1 x cols` matrix.
pub fn col_mean(a: &Matrix) -> Matrix {
    let mut m = col_sum(a);
    let n = a.rows as f64;
    for x in &mut m.data {
        *x /= n;
    }
    m
}
