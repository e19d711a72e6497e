//! Sparse symmetric matrices, their product with blocks, and input data.

mod matrix_market;
mod rhs;

pub use matrix_market::{load_matrix_market, parse_matrix_market, read_dense_array, write_matrix_market, MatrixMarketError};
pub use rhs::{dense_reference_solution, make_rhs, uniform_block, RhsError, RhsSource, RhsSpec};

use crate::linalg::Block;
use nalgebra::DMatrix;
use thiserror::Error;

/// Symmetric operator applied to blocks of vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Block) -> Block;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SparseError {
    #[error("CSR arrays are inconsistent: {0}")]
    Malformed(String),
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("diagonal entry {0} is missing or not positive")]
    BadDiagonal(usize),
}

/// Symmetric matrix in compressed sparse row form, both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Builds from raw CSR arrays and validates symmetry and the diagonal.
    ///
    /// Column indices within a row must be strictly increasing.
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(SparseError::Malformed("row pointer does not match entries".into()));
        }
        if col_idx.len() != values.len() {
            return Err(SparseError::Malformed("index and value arrays differ in length".into()));
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(SparseError::Malformed(format!("row pointer decreases at {i}")));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= n) {
                return Err(SparseError::Malformed(format!("bad column indices in row {i}")));
            }
        }
        let a = SparseSym {
            n,
            row_ptr,
            col_idx,
            values,
        };
        a.validate()?;
        Ok(a)
    }

    /// Builds from triplets (duplicates summed), all entries given explicitly.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, SparseError> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(SparseError::Malformed(format!("entry ({i}, {j}) out of range")));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_csr(n, row_ptr, col_idx, values)
    }

    /// Stores a dense symmetric matrix, dropping exact zeros.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self, SparseError> {
        let n = a.nrows();
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] != 0.0 {
                    trip.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, &trip)
    }

    fn validate(&self) -> Result<(), SparseError> {
        for i in 0..self.n {
            match self.get(i, i) {
                Some(d) if d > 0.0 => {}
                _ => return Err(SparseError::BadDiagonal(i)),
            }
            for (j, v) in self.row(i) {
                if j <= i {
                    continue;
                }
                match self.get(j, i) {
                    Some(w) if (v - w).abs() <= 1e-14 * v.abs().max(w.abs()) => {}
                    _ => return Err(SparseError::NotSymmetric { row: i, col: j }),
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries `(column, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.values[range.start + k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i).unwrap_or(0.0)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
            }
        }
        a
    }

    /// `A · x`, row by row over a row-major copy of `x`.
    pub fn spmm(&self, x: &Block) -> Block {
        assert_eq!(
            x.nrows(),
            self.n,
            "spmm: matrix is {}x{} but block has {} rows",
            self.n,
            self.n,
            x.nrows()
        );
        let m = x.ncols();
        if m == 1 {
            let xs = x.as_slice();
            return Block::from_fn(self.n, 1, |i, _| self.row(i).map(|(j, v)| v * xs[j]).sum());
        }
        let xt = x.transpose();
        let xr = xt.as_slice();
        let mut yr = vec![0.0; self.n * m];
        for i in 0..self.n {
            let out = &mut yr[i * m..(i + 1) * m];
            for (j, v) in self.row(i) {
                let src = &xr[j * m..(j + 1) * m];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        Block::from_row_slice(self.n, m, &yr)
    }
}

impl LinearOperator for SparseSym {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &Block) -> Block {
        self.spmm(x)
    }
}

/// Dense symmetric matrices act as operators too; handy for oracles.
impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &Block) -> Block {
        self * x
    }
}

/// Counts operator-column applications made through it.
#[derive(Debug)]
pub struct CountingOperator<'a, A: LinearOperator + ?Sized> {
    inner: &'a A,
    columns: std::cell::Cell<usize>,
}

impl<'a, A: LinearOperator + ?Sized> CountingOperator<'a, A> {
    pub fn new(inner: &'a A) -> Self {
        Self {
            inner,
            columns: std::cell::Cell::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.columns.get()
    }

    pub fn inner(&self) -> &A {
        self.inner
    }
}

impl<A: LinearOperator + ?Sized> LinearOperator for CountingOperator<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &Block) -> Block {
        self.columns.set(self.columns.get() + x.ncols());
        self.inner.apply(x)
    }
}
