//! Small dense kernels shared by every block algorithm.
//!
//! Blocks are tall `n × m` matrices whose columns are coupled vectors
//! (residuals, directions, iterates, Lanczos vectors). Coefficients are the
//! `m × m` matrices that play the role of the scalars of classical CG and
//! Lanczos. Both are plain [`DMatrix<f64>`] values; the aliases only document
//! intent at call sites.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Tall `n × m` block of vectors.
pub type Block = DMatrix<f64>;

/// Square `m × m` coefficient matrix.
pub type Coeff = DMatrix<f64>;

/// Relative pivot threshold for [`cholesky_upper`].
pub const EPS_PD: f64 = 1e-14;

/// Relative pivot threshold for [`tri_solve`].
pub const EPS_TRI: f64 = 1e-14;

/// Relative asymmetry accepted by [`cholesky_upper`] and [`spd_solve`].
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {op} got {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("Gram matrix is not numerically positive definite (pivot {pivot} = {value:e})")]
    SingularGram { pivot: usize, value: f64 },
    #[error("triangular factor is numerically singular (pivot {pivot} = {value:e})")]
    SingularTriangular { pivot: usize, value: f64 },
}

/// Structural shape a coefficient matrix is expected to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    General,
    UpperTriangular,
    UnitLower,
    Diagonal,
    Orthogonal,
}

impl Shape {
    /// Checks the shape to within `1e-13 · ‖c‖_F`.
    pub fn holds(self, c: &Coeff) -> bool {
        if !c.is_square() {
            return false;
        }
        let tol = 1e-13 * c.norm().max(1.0);
        let m = c.nrows();
        let off = |keep: &dyn Fn(usize, usize) -> bool| {
            let mut s = 0.0;
            for j in 0..m {
                for i in 0..m {
                    if !keep(i, j) {
                        s += c[(i, j)] * c[(i, j)];
                    }
                }
            }
            s.sqrt()
        };
        match self {
            Shape::General => true,
            Shape::UpperTriangular => off(&|i, j| i <= j) <= tol,
            Shape::Diagonal => off(&|i, j| i == j) <= tol,
            Shape::UnitLower => {
                off(&|i, j| i >= j) <= tol && (0..m).all(|i| (c[(i, i)] - 1.0).abs() <= tol)
            }
            Shape::Orthogonal => {
                (c.tr_mul(c) - Coeff::identity(m, m)).norm() <= 1e-13 * (m as f64).sqrt().max(1.0)
            }
        }
    }
}

fn check_finite(x: &DMatrix<f64>, what: &str) -> Result<(), LinalgError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Thin Householder QR, `v = q·r` with `q` of size `n × m`.
///
/// `q` always has orthonormal columns. If `v` is rank deficient the
/// reflections still produce a full orthonormal `q`; the extra columns span
/// directions not present in `v` and the matching diagonal entries of `r`
/// are (numerically) zero. Signs are normalized so that `diag(r) ≥ 0`.
pub fn householder_qr(v: &Block) -> Result<(Block, Coeff), LinalgError> {
    let (n, m) = v.shape();
    if m == 0 || n < m {
        return Err(LinalgError::InvalidInput(format!(
            "householder_qr needs n >= m >= 1, got {n}x{m}"
        )));
    }
    check_finite(v, "QR input")?;

    let mut a = v.clone();
    // Reflection vectors, stored unnormalized with their squared norms.
    let mut reflectors: Vec<Option<(Vec<f64>, f64)>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut norm2 = 0.0;
        for i in j..n {
            norm2 += a[(i, j)] * a[(i, j)];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let x0 = a[(j, j)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut u: Vec<f64> = (j..n).map(|i| a[(i, j)]).collect();
        u[0] -= alpha;
        let unorm2 = norm2 - x0 * x0 + u[0] * u[0];
        if unorm2 == 0.0 {
            reflectors.push(None);
            continue;
        }
        for c in j..m {
            let mut dot = 0.0;
            for (t, ui) in u.iter().enumerate() {
                dot += ui * a[(j + t, c)];
            }
            let f = 2.0 * dot / unorm2;
            for (t, ui) in u.iter().enumerate() {
                a[(j + t, c)] -= f * ui;
            }
        }
        reflectors.push(Some((u, unorm2)));
    }

    let mut r = Coeff::zeros(m, m);
    for j in 0..m {
        for i in 0..=j {
            r[(i, j)] = a[(i, j)];
        }
    }

    // q = H_0 H_1 ... H_{m-1} [I; 0]
    let mut q = Block::zeros(n, m);
    for j in 0..m {
        q[(j, j)] = 1.0;
    }
    for j in (0..m).rev() {
        if let Some((u, unorm2)) = &reflectors[j] {
            for c in 0..m {
                let mut dot = 0.0;
                for (t, ui) in u.iter().enumerate() {
                    dot += ui * q[(j + t, c)];
                }
                if dot == 0.0 {
                    continue;
                }
                let f = 2.0 * dot / unorm2;
                for (t, ui) in u.iter().enumerate() {
                    q[(j + t, c)] -= f * ui;
                }
            }
        }
    }

    for j in 0..m {
        if r[(j, j)] < 0.0 {
            for c in j..m {
                r[(j, c)] = -r[(j, c)];
            }
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok((q, r))
}

/// `(a + aᵀ)/2`.
pub fn symmetrize(a: &Coeff) -> Coeff {
    (a + a.transpose()) * 0.5
}

fn check_symmetric(a: &Coeff) -> Result<(), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::InvalidInput(format!(
            "expected a square matrix, got {:?}",
            a.shape()
        )));
    }
    let asym = (a - a.transpose()).norm();
    if asym > SYMMETRY_TOL * a.norm() {
        return Err(LinalgError::InvalidInput(format!(
            "matrix is not symmetric (‖a - aᵀ‖ = {asym:e})"
        )));
    }
    Ok(())
}

/// Upper Cholesky factor `R` with `RᵀR = a` and positive diagonal.
pub fn cholesky_upper(a: &Coeff) -> Result<Coeff, LinalgError> {
    check_finite(a, "Cholesky input")?;
    check_symmetric(a)?;
    let m = a.nrows();
    let threshold = EPS_PD * a.norm();
    let mut r = Coeff::zeros(m, m);
    for j in 0..m {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= r[(k, j)] * r[(k, j)];
        }
        if d.is_nan() || d <= threshold {
            return Err(LinalgError::SingularGram { pivot: j, value: d });
        }
        let rjj = d.sqrt();
        r[(j, j)] = rjj;
        for c in j + 1..m {
            let mut s = a[(j, c)];
            for k in 0..j {
                s -= r[(k, j)] * r[(k, c)];
            }
            r[(j, c)] = s / rjj;
        }
    }
    Ok(r)
}

/// Which triangular system [`tri_solve`] solves for an upper-triangular `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriSide {
    /// `r⁻¹ · rhs`
    Left,
    /// `r⁻ᵀ · rhs`
    LeftTransposed,
    /// `rhs · r⁻¹`
    Right,
    /// `rhs · r⁻ᵀ`
    RightTransposed,
}

/// Triangular substitution against an upper-triangular `r`.
pub fn tri_solve(r: &Coeff, rhs: &DMatrix<f64>, side: TriSide) -> Result<DMatrix<f64>, LinalgError> {
    if !r.is_square() {
        return Err(LinalgError::InvalidInput("triangular factor must be square".into()));
    }
    let m = r.nrows();
    let max_diag = (0..m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..m {
        let d = r[(i, i)];
        if d.is_nan() || d.abs() <= EPS_TRI * max_diag {
            return Err(LinalgError::SingularTriangular { pivot: i, value: d });
        }
    }
    match side {
        TriSide::Left | TriSide::LeftTransposed => {
            if rhs.nrows() != m {
                return Err(LinalgError::DimensionMismatch {
                    op: "tri_solve",
                    left: r.shape(),
                    right: rhs.shape(),
                });
            }
        }
        TriSide::Right | TriSide::RightTransposed => {
            if rhs.ncols() != m {
                return Err(LinalgError::DimensionMismatch {
                    op: "tri_solve",
                    left: rhs.shape(),
                    right: r.shape(),
                });
            }
        }
    }
    match side {
        TriSide::Left => Ok(upper_left_solve(r, rhs)),
        TriSide::LeftTransposed => Ok(upper_transposed_left_solve(r, rhs)),
        // x r⁻¹ = (r⁻ᵀ xᵀ)ᵀ
        TriSide::Right => Ok(upper_transposed_left_solve(r, &rhs.transpose()).transpose()),
        // x r⁻ᵀ = (r⁻¹ xᵀ)ᵀ
        TriSide::RightTransposed => Ok(upper_left_solve(r, &rhs.transpose()).transpose()),
    }
}

fn upper_left_solve(r: &Coeff, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let m = r.nrows();
    let mut x = rhs.clone();
    for c in 0..x.ncols() {
        for i in (0..m).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..m {
                s -= r[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / r[(i, i)];
        }
    }
    x
}

fn upper_transposed_left_solve(r: &Coeff, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let m = r.nrows();
    let mut x = rhs.clone();
    for c in 0..x.ncols() {
        for i in 0..m {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= r[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / r[(i, i)];
        }
    }
    x
}

/// Solves `a · x = rhs` for symmetric positive definite `a`.
pub fn spd_solve(a: &Coeff, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    if rhs.nrows() != a.nrows() {
        return Err(LinalgError::DimensionMismatch {
            op: "spd_solve",
            left: a.shape(),
            right: rhs.shape(),
        });
    }
    let r = cholesky_upper(a)?;
    let y = tri_solve(&r, rhs, TriSide::LeftTransposed)?;
    tri_solve(&r, &y, TriSide::Left)
}

/// `xᵀy`; symmetrized when `x` and `y` are the same block.
pub fn block_inner(x: &Block, y: &Block) -> Result<Coeff, LinalgError> {
    if std::ptr::eq(x, y) {
        return Ok(gram(x));
    }
    if x.nrows() != y.nrows() {
        return Err(LinalgError::DimensionMismatch {
            op: "block_inner",
            left: x.shape(),
            right: y.shape(),
        });
    }
    Ok(x.tr_mul(y))
}

/// Symmetrized `xᵀx`.
pub fn gram(x: &Block) -> Coeff {
    symmetrize(&x.tr_mul(x))
}

/// `x · c`
pub fn block_scale(x: &Block, c: &Coeff) -> Result<Block, LinalgError> {
    if x.ncols() != c.nrows() {
        return Err(LinalgError::DimensionMismatch {
            op: "block_scale",
            left: x.shape(),
            right: c.shape(),
        });
    }
    Ok(x * c)
}

/// `x + y · c`
pub fn block_axpy(x: &Block, y: &Block, c: &Coeff) -> Result<Block, LinalgError> {
    if y.ncols() != c.nrows() || x.shape() != (y.nrows(), c.ncols()) {
        return Err(LinalgError::DimensionMismatch {
            op: "block_axpy",
            left: x.shape(),
            right: (y.nrows(), c.ncols()),
        });
    }
    let mut out = x.clone();
    out.gemm(1.0, y, c, 1.0);
    Ok(out)
}

/// Spectral condition number of a symmetric matrix (`inf` if not definite).
pub fn spd_condition(a: &Coeff) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(a));
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a general square matrix by partial-pivoting LU.
pub fn general_inverse(a: &Coeff) -> Result<Coeff, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::InvalidInput("inverse of a non-square matrix".into()));
    }
    a.clone().lu().try_inverse().ok_or(LinalgError::SingularTriangular {
        pivot: 0,
        value: 0.0,
    })
}

/// Solves `a · x = rhs` for a general square `a`.
pub fn general_solve(a: &Coeff, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    if rhs.nrows() != a.nrows() {
        return Err(LinalgError::DimensionMismatch {
            op: "general_solve",
            left: a.shape(),
            right: rhs.shape(),
        });
    }
    a.clone().lu().solve(rhs).ok_or(LinalgError::SingularTriangular {
        pivot: 0,
        value: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block(n: usize, m: usize, seed: u64) -> Block {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Block::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5)
    }

    fn orthonormality(q: &Block) -> f64 {
        (q.tr_mul(q) - Coeff::identity(q.ncols(), q.ncols())).norm()
    }

    #[test]
    fn qr_of_embedded_identity() {
        let mut v = Block::zeros(4, 2);
        v[(0, 0)] = 1.0;
        v[(1, 1)] = 1.0;
        let (q, r) = householder_qr(&v).unwrap();
        assert!((&q - &v).norm() < 1e-15);
        assert!((r - Coeff::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn qr_of_duplicate_column() {
        let mut v = Block::zeros(4, 2);
        v[(0, 0)] = 1.0;
        v[(0, 1)] = 1.0;
        let (q, r) = householder_qr(&v).unwrap();
        assert!((&r - dmatrix![1.0, 1.0; 0.0, 0.0]).norm() < 1e-15);
        assert!(orthonormality(&q) < 1e-15);
        assert!((q.column(0) - v.column(0)).norm() < 1e-15);
        assert!((&q * &r - &v).norm() < 1e-15);
    }

    #[test]
    fn qr_random_tall_block() {
        let v = random_block(50, 3, 7);
        let (q, r) = householder_qr(&v).unwrap();
        assert!(orthonormality(&q) < 1e-13);
        assert!((&q * &r - &v).norm() < 1e-13 * v.norm());
        assert!(Shape::UpperTriangular.holds(&r));
        assert!((0..3).all(|i| r[(i, i)] >= 0.0));
    }

    #[test]
    fn qr_zero_block_is_still_orthonormal() {
        let v = Block::zeros(6, 3);
        let (q, r) = householder_qr(&v).unwrap();
        assert!(orthonormality(&q) < 1e-15);
        assert_eq!(r, Coeff::zeros(3, 3));
    }

    #[test]
    fn qr_rejects_bad_input() {
        let mut v = Block::zeros(3, 2);
        v[(1, 1)] = f64::NAN;
        assert!(matches!(householder_qr(&v), Err(LinalgError::InvalidInput(_))));
        assert!(householder_qr(&Block::zeros(2, 3)).is_err());
    }

    #[test]
    fn cholesky_examples() {
        let i3 = Coeff::identity(3, 3);
        assert_eq!(cholesky_upper(&i3).unwrap(), i3);
        let r = cholesky_upper(&dmatrix![4.0, 2.0; 2.0, 2.0]).unwrap();
        assert!((r - dmatrix![2.0, 1.0; 0.0, 1.0]).norm() < 1e-15);
    }

    #[test]
    fn cholesky_rank_deficient_gram() {
        let mut v = Block::zeros(4, 2);
        v[(0, 0)] = 1.0;
        v[(0, 1)] = 1.0;
        let err = cholesky_upper(&gram(&v)).unwrap_err();
        assert!(matches!(err, LinalgError::SingularGram { pivot: 1, .. }));
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        assert!(matches!(
            cholesky_upper(&dmatrix![2.0, 1.0; 0.0, 2.0]),
            Err(LinalgError::InvalidInput(_))
        ));
    }

    #[test]
    fn spd_solve_examples() {
        let x = random_block(3, 2, 1);
        assert_eq!(spd_solve(&Coeff::identity(3, 3), &x).unwrap(), x);
        let sol = spd_solve(&dmatrix![4.0, 2.0; 2.0, 2.0], &dmatrix![2.0; 2.0]).unwrap();
        assert!((sol - dmatrix![0.0; 1.0]).norm() < 1e-15);
        let d = spd_solve(&dmatrix![2.0, 0.0; 0.0, 5.0], &Coeff::identity(2, 2)).unwrap();
        assert!((d - dmatrix![0.5, 0.0; 0.0, 0.2]).norm() < 1e-15);
    }

    #[test]
    fn tri_solve_examples() {
        let rhs = random_block(2, 3, 3);
        assert_eq!(tri_solve(&Coeff::identity(2, 2), &rhs, TriSide::Left).unwrap(), rhs);
        let r = dmatrix![2.0, 1.0; 0.0, 1.0];
        let id = tri_solve(&r, &r, TriSide::Right).unwrap();
        assert!((id - Coeff::identity(2, 2)).norm() < 1e-15);
        let err = tri_solve(&dmatrix![1.0, 1.0; 0.0, 0.0], &r, TriSide::Left).unwrap_err();
        assert!(matches!(err, LinalgError::SingularTriangular { pivot: 1, .. }));
    }

    #[test]
    fn tri_solve_all_sides_agree_with_products() {
        let (_, r) = householder_qr(&random_block(10, 4, 11)).unwrap();
        let x = random_block(4, 4, 12);
        let rt = r.transpose();
        let check = |side, expect: DMatrix<f64>| {
            let got = tri_solve(&r, &expect, side).unwrap();
            (got - &x).norm()
        };
        assert!(check(TriSide::Left, &r * &x) < 1e-12);
        assert!(check(TriSide::LeftTransposed, &rt * &x) < 1e-12);
        assert!(check(TriSide::Right, &x * &r) < 1e-12);
        assert!(check(TriSide::RightTransposed, &x * &rt) < 1e-12);
    }

    #[test]
    fn inner_products() {
        let (q, _) = householder_qr(&random_block(9, 3, 5)).unwrap();
        assert!((block_inner(&q, &q).unwrap() - Coeff::identity(3, 3)).norm() < 1e-13);

        let mut x = Block::zeros(3, 2);
        x[(0, 0)] = 1.0;
        x[(1, 1)] = 1.0;
        let mut y = Block::zeros(3, 2);
        y[(1, 0)] = 1.0;
        y[(0, 1)] = 1.0;
        assert_eq!(block_inner(&x, &y).unwrap(), dmatrix![0.0, 1.0; 1.0, 0.0]);

        let a = random_block(30, 2, 8);
        let b = random_block(30, 2, 9);
        let got = block_inner(&a, &b).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let naive: f64 = (0..30).map(|t| a[(t, i)] * b[(t, j)]).sum();
                assert!((got[(i, j)] - naive).abs() < 1e-14);
            }
        }
        assert!(block_inner(&a, &random_block(29, 2, 1)).is_err());
    }

    #[test]
    fn scale_and_axpy() {
        let x = random_block(20, 2, 21);
        let y = random_block(20, 2, 22);
        let c = random_block(2, 2, 23);
        assert_eq!(block_scale(&x, &Coeff::identity(2, 2)).unwrap(), x);
        assert_eq!(block_axpy(&x, &y, &Coeff::zeros(2, 2)).unwrap(), x);
        let got = block_axpy(&x, &y, &c).unwrap();
        for i in 0..20 {
            for j in 0..2 {
                let mut naive = x[(i, j)];
                for t in 0..2 {
                    naive += y[(i, t)] * c[(t, j)];
                }
                assert!((got[(i, j)] - naive).abs() < 1e-14);
            }
        }
        assert!(block_scale(&x, &random_block(3, 2, 1)).is_err());
        assert!(block_axpy(&x, &random_block(20, 3, 1), &c).is_err());
    }

    #[test]
    fn shape_tags() {
        assert!(Shape::Diagonal.holds(&dmatrix![2.0, 0.0; 0.0, 5.0]));
        assert!(!Shape::Diagonal.holds(&dmatrix![2.0, 1.0; 0.0, 5.0]));
        assert!(Shape::UnitLower.holds(&dmatrix![1.0, 0.0; 3.0, 1.0]));
        assert!(Shape::Orthogonal.holds(&dmatrix![0.0, 1.0; 1.0, 0.0]));
        assert!(!Shape::UpperTriangular.holds(&dmatrix![1.0, 0.0; 3.0, 1.0]));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn block_strategy() -> impl Strategy<Value = Block> {
            (1usize..6, 0usize..20, any::<u64>(), 0usize..3).prop_map(|(m, extra, seed, dup)| {
                let mut v = random_block(m + extra, m, seed);
                // Duplicate leading columns to exercise the rank-deficient path.
                for j in 1..m.min(dup + 1) {
                    let c0 = v.column(0).clone_owned();
                    v.set_column(j, &c0);
                }
                v
            })
        }

        proptest! {
            #[test]
            fn qr_round_trip(v in block_strategy()) {
                let (q, r) = householder_qr(&v).unwrap();
                prop_assert!(orthonormality(&q) <= 1e-13);
                prop_assert!((&q * &r - &v).norm() <= 1e-13 * v.norm().max(1.0));
                prop_assert!(Shape::UpperTriangular.holds(&r));
                prop_assert!((0..r.nrows()).all(|i| r[(i, i)] >= 0.0));
            }

            #[test]
            fn cholesky_round_trip(m in 1usize..8, seed in any::<u64>()) {
                let (_, mut r) = householder_qr(&random_block(m + 3, m, seed)).unwrap();
                for i in 0..m {
                    r[(i, i)] += 0.5;
                }
                let back = cholesky_upper(&(r.transpose() * &r)).unwrap();
                prop_assert!((&back - &r).norm() <= 1e-12 * r.norm());
            }

            #[test]
            fn spd_solve_recovers(m in 1usize..64, seed in any::<u64>(), logk in 0.0f64..6.0) {
                let (q, _) = householder_qr(&random_block(m, m, seed)).unwrap();
                let eigs = Coeff::from_diagonal(&nalgebra::DVector::from_fn(m, |i, _| {
                    if m == 1 { 1.0 } else { 10f64.powf(logk * i as f64 / (m - 1) as f64) }
                }));
                let a = symmetrize(&(&q * eigs * q.transpose()));
                let x = random_block(m, 2, seed ^ 0x55);
                let got = spd_solve(&a, &(&a * &x)).unwrap();
                prop_assert!((&got - &x).norm() <= 1e-10 * x.norm());
            }
        }
    }
}
