//! SPD preconditioners `M = L·Lᵀ`.
//!
//! Preconditioned DR-BCG needs the split form (solves with `L` and `Lᵀ`),
//! while DP-BCG and HS-BCG only need `M⁻¹`. Every kind here offers both.

use crate::linalg::Block;
use crate::sparse::SparseSym;
use thiserror::Error;

/// Number of times the diagonal shift is multiplied by ten after a failed
/// incomplete factorization.
pub const MAX_SHIFT_ESCALATIONS: usize = 6;

/// First shift tried when the requested shift is zero and factorization fails.
pub const ZERO_SHIFT_START: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrecondError {
    #[error("incomplete Cholesky broke down at row {row} even with shift {shift:e}")]
    Breakdown { row: usize, shift: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondKind {
    Identity,
    Jacobi,
    IncompleteCholesky,
}

impl PrecondKind {
    /// Name used on the command line and in trace metadata.
    pub fn name(self) -> &'static str {
        match self {
            PrecondKind::Identity => "none",
            PrecondKind::Jacobi => "jacobi",
            PrecondKind::IncompleteCholesky => "ic",
        }
    }
}

/// Lower-triangular factor in CSR form, diagonal stored last in each row.
#[derive(Debug, Clone, PartialEq)]
struct LowerFactor {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl LowerFactor {
    fn forward(&self, x: &mut [f64]) {
        let n = self.row_ptr.len() - 1;
        for i in 0..n {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = x[i];
            for k in start..end - 1 {
                s -= self.values[k] * x[self.col_idx[k]];
            }
            x[i] = s / self.values[end - 1];
        }
    }

    fn backward(&self, x: &mut [f64]) {
        let n = self.row_ptr.len() - 1;
        for i in (0..n).rev() {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            x[i] /= self.values[end - 1];
            let xi = x[i];
            for k in start..end - 1 {
                x[self.col_idx[k]] -= self.values[k] * xi;
            }
        }
    }

    fn multiply(&self, x: &mut [f64]) {
        let n = self.row_ptr.len() - 1;
        for i in (0..n).rev() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            x[i] = s;
        }
    }

    fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.row_ptr.len() - 1;
        let mut l = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                l[(i, self.col_idx[k])] = self.values[k];
            }
        }
        l
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Factor {
    Identity,
    /// `sqrt(diag(A))`
    Diagonal(Vec<f64>),
    Lower(LowerFactor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    kind: PrecondKind,
    n: usize,
    factor: Factor,
    shift: f64,
}

impl Preconditioner {
    pub fn identity(n: usize) -> Self {
        Self {
            kind: PrecondKind::Identity,
            n,
            factor: Factor::Identity,
            shift: 0.0,
        }
    }

    pub fn jacobi(a: &SparseSym) -> Self {
        Self {
            kind: PrecondKind::Jacobi,
            n: a.n(),
            factor: Factor::Diagonal(a.diagonal().iter().map(|d| d.sqrt()).collect()),
            shift: 0.0,
        }
    }

    /// Incomplete Cholesky of `A + shift·diag(A)`.
    ///
    /// `droptol = 0` keeps exactly the lower pattern of `A` (IC(0)). With
    /// `droptol > 0`, fill-in outside that pattern is kept only when its
    /// magnitude reaches `droptol · ‖row i of A‖₂`. A non-positive pivot
    /// multiplies the shift by ten and restarts, at most
    /// [`MAX_SHIFT_ESCALATIONS`] times.
    pub fn incomplete_cholesky(a: &SparseSym, shift: f64, droptol: f64) -> Result<Self, PrecondError> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(PrecondError::InvalidParameter(format!("shift must be >= 0, got {shift}")));
        }
        if !(droptol >= 0.0 && droptol.is_finite()) {
            return Err(PrecondError::InvalidParameter(format!("droptol must be >= 0, got {droptol}")));
        }
        let mut current = shift;
        let mut last_row = 0;
        for attempt in 0..=MAX_SHIFT_ESCALATIONS {
            if attempt > 0 {
                current = if current == 0.0 { ZERO_SHIFT_START } else { current * 10.0 };
            }
            match ic_factor(a, current, droptol) {
                Ok(l) => {
                    return Ok(Self {
                        kind: PrecondKind::IncompleteCholesky,
                        n: a.n(),
                        factor: Factor::Lower(l),
                        shift: current,
                    })
                }
                Err(row) => last_row = row,
            }
        }
        Err(PrecondError::Breakdown {
            row: last_row,
            shift: current,
        })
    }

    pub fn kind(&self) -> PrecondKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Diagonal shift the factorization finally used.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn has_split(&self) -> bool {
        true
    }

    pub fn has_inverse(&self) -> bool {
        true
    }

    pub fn is_identity(&self) -> bool {
        self.kind == PrecondKind::Identity
    }

    /// Dense `L` (testing and small problems only).
    pub fn lower_dense(&self) -> nalgebra::DMatrix<f64> {
        match &self.factor {
            Factor::Identity => nalgebra::DMatrix::identity(self.n, self.n),
            Factor::Diagonal(d) => nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            Factor::Lower(l) => l.to_dense(),
        }
    }

    fn map_columns(&self, x: &Block, f: impl Fn(&mut [f64])) -> Block {
        assert_eq!(x.nrows(), self.n, "preconditioner dimension mismatch");
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            f(col.as_mut_slice());
        }
        out
    }

    /// `L⁻¹ · x`
    pub fn solve_lower(&self, x: &Block) -> Block {
        match &self.factor {
            Factor::Identity => x.clone(),
            Factor::Diagonal(d) => self.map_columns(x, |c| c.iter_mut().zip(d).for_each(|(v, s)| *v /= s)),
            Factor::Lower(l) => self.map_columns(x, |c| l.forward(c)),
        }
    }

    /// `L⁻ᵀ · x`
    pub fn solve_upper(&self, x: &Block) -> Block {
        match &self.factor {
            Factor::Identity => x.clone(),
            Factor::Diagonal(d) => self.map_columns(x, |c| c.iter_mut().zip(d).for_each(|(v, s)| *v /= s)),
            Factor::Lower(l) => self.map_columns(x, |c| l.backward(c)),
        }
    }

    /// `L · x`
    pub fn apply_lower(&self, x: &Block) -> Block {
        match &self.factor {
            Factor::Identity => x.clone(),
            Factor::Diagonal(d) => self.map_columns(x, |c| c.iter_mut().zip(d).for_each(|(v, s)| *v *= s)),
            Factor::Lower(l) => self.map_columns(x, |c| l.multiply(c)),
        }
    }

    /// `M⁻¹ · x = L⁻ᵀ L⁻¹ x`
    pub fn apply_inv(&self, x: &Block) -> Block {
        match &self.factor {
            Factor::Identity => x.clone(),
            Factor::Diagonal(d) => self.map_columns(x, |c| c.iter_mut().zip(d).for_each(|(v, s)| *v /= s * s)),
            Factor::Lower(l) => self.map_columns(x, |c| {
                l.forward(c);
                l.backward(c);
            }),
        }
    }
}

/// Row-wise left-looking incomplete Cholesky. Returns the failing row on a
/// non-positive pivot.
fn ic_factor(a: &SparseSym, shift: f64, droptol: f64) -> Result<LowerFactor, usize> {
    let n = a.n();
    // Columns of L built so far: (row, value), rows increasing.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut diag = vec![0.0; n];
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);

    let mut work = vec![0.0; n];
    let mut in_pattern = vec![false; n];
    let mut touched = vec![false; n];
    let mut touched_list = Vec::new();
    let mut pending = std::collections::BTreeSet::new();

    for i in 0..n {
        let mut a_ii = 0.0;
        let row_norm = a.row(i).map(|(_, v)| v * v).sum::<f64>().sqrt();
        let drop_below = droptol * row_norm;
        for (j, v) in a.row(i) {
            if j < i {
                work[j] = v;
                in_pattern[j] = true;
                touched[j] = true;
                touched_list.push(j);
                pending.insert(j);
            } else if j == i {
                a_ii = v * (1.0 + shift);
            }
        }

        let mut row: Vec<(usize, f64)> = Vec::new();
        while let Some(j) = pending.pop_first() {
            let keep_fill = droptol > 0.0;
            let lij = work[j] / diag[j];
            let keep = in_pattern[j] || (keep_fill && lij.abs() >= drop_below);
            if keep && lij != 0.0 {
                row.push((j, lij));
                // Eliminate with column j of L: work[k] -= l_ij · l_kj for j < k < i.
                for &(k, lkj) in &cols[j] {
                    if k >= i {
                        break;
                    }
                    if !in_pattern[k] && !keep_fill {
                        continue;
                    }
                    work[k] -= lij * lkj;
                    if !touched[k] {
                        touched[k] = true;
                        touched_list.push(k);
                        pending.insert(k);
                    }
                }
            }
        }

        let mut d = a_ii;
        for &(_, v) in &row {
            d -= v * v;
        }
        for j in touched_list.drain(..) {
            work[j] = 0.0;
            touched[j] = false;
            in_pattern[j] = false;
        }
        if d.is_nan() || d <= 0.0 {
            return Err(i);
        }
        let lii = d.sqrt();
        diag[i] = lii;
        for &(j, v) in &row {
            cols[j].push((i, v));
            col_idx.push(j);
            values.push(v);
        }
        col_idx.push(i);
        values.push(lii);
        row_ptr.push(col_idx.len());
    }
    Ok(LowerFactor {
        row_ptr,
        col_idx,
        values,
    })
}
