//! Right-hand side blocks.
//!
//! Random entries come from ChaCha8 seeded with `seed_from_u64(seed)`; each
//! purpose draws from its own ChaCha stream (see the `STREAM_*` constants) so
//! that, for a given seed, the random `b` and a constructed solution are
//! independent yet reproducible on every platform.

use super::{read_dense_array, MatrixMarketError, SparseSym};
use crate::linalg::Block;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use thiserror::Error;

const STREAM_RHS: u64 = 1;
const STREAM_SOLUTION: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum RhsSource {
    /// i.i.d. uniform(0,1) entries; the exact solution is not known.
    Random { seed: u64 },
    /// Dense `array real general` MatrixMarket file.
    File(PathBuf),
    /// Random uniform(0,1) solution `x`, `b = A·x`.
    ConstructedSolution { seed: u64 },
    /// Every column equal to one random uniform(0,1) vector; exactly rank one.
    DuplicateColumn { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhsSpec {
    pub source: RhsSource,
    pub m: usize,
}

#[derive(Debug, Error)]
pub enum RhsError {
    #[error("block width must be at least 1")]
    ZeroWidth,
    #[error("right-hand side file is {got:?}, expected {want:?}")]
    Shape { got: (usize, usize), want: (usize, usize) },
    #[error(transparent)]
    File(#[from] MatrixMarketError),
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Uniform(0,1) block drawn from the given seed and stream.
pub fn uniform_block(n: usize, m: usize, seed: u64, stream: u64) -> Block {
    let mut r = rng(seed, stream);
    // Column-major fill order matches `rand(n, m)` conventions.
    let data: Vec<f64> = (0..n * m).map(|_| r.random::<f64>()).collect();
    Block::from_column_slice(n, m, &data)
}

/// Builds `b` and, when known by construction, the exact solution.
pub fn make_rhs(spec: &RhsSpec, a: &SparseSym) -> Result<(Block, Option<Block>), RhsError> {
    let (n, m) = (a.n(), spec.m);
    if m == 0 {
        return Err(RhsError::ZeroWidth);
    }
    match &spec.source {
        RhsSource::Random { seed } => Ok((uniform_block(n, m, *seed, STREAM_RHS), None)),
        RhsSource::File(path) => {
            let b = read_dense_array(path)?;
            if b.shape() != (n, m) {
                return Err(RhsError::Shape {
                    got: b.shape(),
                    want: (n, m),
                });
            }
            Ok((b, None))
        }
        RhsSource::ConstructedSolution { seed } => {
            let x = uniform_block(n, m, *seed, STREAM_SOLUTION);
            Ok((a.spmm(&x), Some(x)))
        }
        RhsSource::DuplicateColumn { seed } => {
            let c = uniform_block(n, 1, *seed, STREAM_RHS);
            Ok((Block::from_fn(n, m, |i, _| c[(i, 0)]), None))
        }
    }
}

/// Exact solution by dense Cholesky; `None` if `A` is not numerically SPD.
pub fn dense_reference_solution(a: &SparseSym, b: &Block) -> Option<Block> {
    let chol = a.to_dense().cholesky()?;
    Some(chol.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmat;

    #[test]
    fn same_seed_same_bits() {
        let a = testmat::laplacian_1d(20);
        let spec = RhsSpec {
            source: RhsSource::Random { seed: 5 },
            m: 3,
        };
        let (b1, x1) = make_rhs(&spec, &a).unwrap();
        let (b2, _) = make_rhs(&spec, &a).unwrap();
        assert!(x1.is_none());
        assert_eq!(b1.as_slice(), b2.as_slice());
        assert!(b1.iter().all(|&v| (0.0..1.0).contains(&v)));
        let other = make_rhs(&RhsSpec { source: RhsSource::Random { seed: 6 }, m: 3 }, &a).unwrap().0;
        assert_ne!(b1, other);
    }

    #[test]
    fn constructed_solution_is_exact() {
        let a = testmat::laplacian_1d(15);
        let (b, x) = make_rhs(
            &RhsSpec {
                source: RhsSource::ConstructedSolution { seed: 1 },
                m: 2,
            },
            &a,
        )
        .unwrap();
        let x = x.unwrap();
        assert_eq!(a.spmm(&x), b);
        let solved = dense_reference_solution(&a, &b).unwrap();
        assert!((solved - x).norm() < 1e-10);
    }

    #[test]
    fn duplicate_columns_make_singular_gram() {
        let a = testmat::laplacian_1d(10);
        let (b, _) = make_rhs(
            &RhsSpec {
                source: RhsSource::DuplicateColumn { seed: 3 },
                m: 2,
            },
            &a,
        )
        .unwrap();
        assert_eq!(b.column(0), b.column(1));
        assert!(crate::linalg::cholesky_upper(&crate::linalg::gram(&b)).is_err());
    }

    #[test]
    fn zero_width_is_rejected() {
        let a = testmat::laplacian_1d(4);
        let spec = RhsSpec {
            source: RhsSource::Random { seed: 0 },
            m: 0,
        };
        assert!(matches!(make_rhs(&spec, &a), Err(RhsError::ZeroWidth)));
    }
}
