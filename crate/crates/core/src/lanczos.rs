//! Block Lanczos tridiagonalization.
//!
//! Starting from an `n × m` block `v = v₁β₁`, the process builds blocks with
//! `vᵢᵀvⱼ = δᵢⱼ I` and a symmetric block tridiagonal `T_k` with diagonal
//! blocks `α_j` and upper-triangular subdiagonal blocks `β_{j+1}` (the
//! R-factors of the Householder QR of each new block), so that
//!
//! ```text
//! A V_k = V_k T_k + v_{k+1} β_{k+1} e_kᵀ
//! ```

use crate::linalg::{self, Block, Coeff, LinalgError};
use crate::sparse::LinearOperator;
use nalgebra::DMatrix;

/// Relative threshold on `diag(β_{k+1})` that signals loss of rank.
pub const BREAKDOWN_TOL: f64 = 1e-12;

/// Symmetric block tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiag {
    /// Block size `m`.
    pub m: usize,
    /// `β₁` with `v = v₁β₁`.
    pub beta1: Coeff,
    /// `α₁ … α_k`
    pub alphas: Vec<Coeff>,
    /// `β₂ … β_k` (subdiagonal blocks).
    pub betas: Vec<Coeff>,
    /// `β_{k+1}`, the coupling to the next block, when it has been computed.
    pub next_beta: Option<Coeff>,
}

impl BlockTridiag {
    pub fn new(m: usize, beta1: Coeff) -> Self {
        Self {
            m,
            beta1,
            alphas: Vec::new(),
            betas: Vec::new(),
            next_beta: None,
        }
    }

    /// Number of block steps `k`.
    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    /// Appends `α_k` and `β_{k+1}`.
    pub fn push(&mut self, alpha: Coeff, beta_next: Coeff) {
        if let Some(prev) = self.next_beta.take() {
            self.betas.push(prev);
        }
        self.alphas.push(alpha);
        self.next_beta = Some(beta_next);
    }

    /// Dense leading `k·m × k·m` principal part (`k ≤ steps()`).
    pub fn densify_leading(&self, k: usize) -> DMatrix<f64> {
        let m = self.m;
        let mut t = DMatrix::zeros(k * m, k * m);
        for (j, a) in self.alphas.iter().take(k).enumerate() {
            t.view_mut((j * m, j * m), (m, m)).copy_from(a);
        }
        for (j, b) in self.betas.iter().take(k.saturating_sub(1)).enumerate() {
            t.view_mut(((j + 1) * m, j * m), (m, m)).copy_from(b);
            t.view_mut((j * m, (j + 1) * m), (m, m)).copy_from(&b.transpose());
        }
        t
    }

    /// Dense `T_k`.
    pub fn densify(&self) -> DMatrix<f64> {
        self.densify_leading(self.steps())
    }
}

/// Orthonormal Lanczos blocks `v₁ … v_{k+1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LanczosBasis {
    pub blocks: Vec<Block>,
}

impl LanczosBasis {
    /// `V_k = [v₁ … v_k]`.
    pub fn leading(&self, k: usize) -> DMatrix<f64> {
        let n = self.blocks[0].nrows();
        let m = self.blocks[0].ncols();
        let mut v = DMatrix::zeros(n, k * m);
        for (j, b) in self.blocks.iter().take(k).enumerate() {
            v.view_mut((0, j * m), (n, m)).copy_from(b);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orthogonalization {
    /// `α_k = v_kᵀ w` after removing `v_{k-1}β_kᵀ`.
    ModifiedGramSchmidt,
    /// `α_k = v_kᵀ A v_k`.
    Classical,
    /// Modified Gram–Schmidt plus two passes of projection against all
    /// previous blocks.
    FullReorthogonalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LanczosOptions {
    pub orthogonalization: Orthogonalization,
    pub keep_basis: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            orthogonalization: Orthogonalization::ModifiedGramSchmidt,
            keep_basis: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanczosRun {
    pub tridiag: BlockTridiag,
    pub basis: Option<LanczosBasis>,
    /// `β_{k+1}` lost rank; `tridiag` holds the steps completed.
    pub breakdown: bool,
}

/// Runs up to `k_max` block Lanczos steps.
pub fn block_lanczos<A: LinearOperator + ?Sized>(
    a: &A,
    v: &Block,
    k_max: usize,
    opts: LanczosOptions,
) -> Result<LanczosRun, LinalgError> {
    let (n, m) = v.shape();
    if n != a.dim() {
        return Err(LinalgError::DimensionMismatch {
            op: "block_lanczos",
            left: (a.dim(), a.dim()),
            right: v.shape(),
        });
    }
    if k_max * m > n {
        return Err(LinalgError::InvalidInput(format!(
            "k_max·m = {} exceeds n = {n}",
            k_max * m
        )));
    }
    // A rank-deficient start has no Lanczos basis; the Cholesky test reports it.
    linalg::cholesky_upper(&linalg::gram(v))?;
    let (v1, beta1) = linalg::householder_qr(v)?;

    let full = opts.orthogonalization == Orthogonalization::FullReorthogonalization;
    let keep = opts.keep_basis || full;
    let mut blocks = vec![v1.clone()];
    let mut tridiag = BlockTridiag::new(m, beta1);
    let mut prev: Option<Block> = None;
    let mut prev_beta: Option<Coeff> = None;
    let mut current = v1;
    let mut breakdown = false;

    for _ in 0..k_max {
        let av = a.apply(&current);
        let mut w = av.clone();
        if let (Some(vp), Some(bk)) = (&prev, &prev_beta) {
            w = linalg::block_axpy(&w, vp, &(-bk.transpose()))?;
        }
        let alpha = match opts.orthogonalization {
            Orthogonalization::Classical => linalg::symmetrize(&linalg::block_inner(&current, &av)?),
            _ => linalg::symmetrize(&linalg::block_inner(&current, &w)?),
        };
        w = linalg::block_axpy(&w, &current, &(-&alpha))?;
        if full {
            for _ in 0..2 {
                for b in &blocks {
                    let h = linalg::block_inner(b, &w)?;
                    w = linalg::block_axpy(&w, b, &(-h))?;
                }
            }
        }
        let (next, beta) = linalg::householder_qr(&w)?;
        let diag: Vec<f64> = (0..m).map(|i| beta[(i, i)]).collect();
        let max_d = diag.iter().cloned().fold(0.0, f64::max);
        let min_d = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = alpha.norm() + prev_beta.as_ref().map_or(0.0, |b| b.norm());
        let lost_rank = max_d <= BREAKDOWN_TOL * scale || min_d < BREAKDOWN_TOL * max_d;
        tridiag.push(alpha, beta.clone());
        if lost_rank {
            breakdown = true;
            break;
        }
        if keep {
            blocks.push(next.clone());
        }
        prev = Some(std::mem::replace(&mut current, next));
        prev_beta = Some(beta);
    }

    Ok(LanczosRun {
        tridiag,
        basis: keep.then_some(LanczosBasis { blocks }),
        breakdown,
    })
}

/// `‖A V_k − V_k T_k − v_{k+1}β_{k+1}e_kᵀ‖_F / ‖A V_k‖_F`.
///
/// After a breakdown there is no `v_{k+1}` and the last term is dropped.
pub fn verify_lanczos_relation<A: LinearOperator + ?Sized>(
    a: &A,
    basis: &LanczosBasis,
    t: &BlockTridiag,
) -> f64 {
    let k = t.steps();
    let m = t.m;
    let vk = basis.leading(k);
    let avk = a.apply(&vk);
    let mut resid = &avk - &vk * t.densify();
    if let (Some(next), Some(beta)) = (basis.blocks.get(k), &t.next_beta) {
        let tail = next * beta;
        let n = vk.nrows();
        let mut view = resid.view_mut((0, (k - 1) * m), (n, m));
        view -= tail;
    }
    resid.norm() / avk.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmat;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block(n: usize, m: usize, seed: u64) -> Block {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Block::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5)
    }

    fn full() -> LanczosOptions {
        LanczosOptions {
            orthogonalization: Orthogonalization::FullReorthogonalization,
            keep_basis: true,
        }
    }

    #[test]
    fn eigenvector_start_breaks_down_immediately() {
        let a = testmat::diagonal(&[1.0, 2.0, 3.0]);
        let v = dmatrix![1.0; 0.0; 0.0];
        let run = block_lanczos(&a, &v, 3, LanczosOptions::default()).unwrap();
        assert!(run.breakdown);
        assert_eq!(run.tridiag.steps(), 1);
        assert_eq!(run.tridiag.alphas[0], dmatrix![1.0]);
        assert_eq!(run.tridiag.next_beta, Some(dmatrix![0.0]));
    }

    #[test]
    fn first_alpha_is_rayleigh_quotient() {
        let a = testmat::diagonal(&[1.0, 2.0]);
        let s = 0.5f64.sqrt();
        let run = block_lanczos(&a, &dmatrix![s; s], 1, LanczosOptions::default()).unwrap();
        assert!((run.tridiag.alphas[0][(0, 0)] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn full_reorth_matches_projection() {
        let a = testmat::random_spd(30, 1e3, 1);
        let v = random_block(30, 2, 2);
        let run = block_lanczos(&a, &v, 5, full()).unwrap();
        assert!(!run.breakdown);
        let basis = run.basis.unwrap();
        let vk = basis.leading(5);
        let proj = vk.transpose() * a.to_dense() * &vk;
        let t = run.tridiag.densify();
        let scale = t.norm();
        assert!((proj - &t).amax() < 1e-11 * scale);
        assert!(verify_lanczos_relation(&a, &basis, &run.tridiag) < 1e-11);
        let orth = basis.leading(6);
        assert!((orth.transpose() * &orth - DMatrix::identity(12, 12)).amax() < 1e-10);
        assert!((&basis.blocks[0] * &run.tridiag.beta1 - &v).norm() < 1e-13 * v.norm());
    }

    #[test]
    fn scalar_relation_reduces_to_three_terms() {
        let a = testmat::random_spd(20, 100.0, 3);
        let v = random_block(20, 1, 4);
        let run = block_lanczos(&a, &v, 1, full()).unwrap();
        let basis = run.basis.unwrap();
        let (v1, v2) = (&basis.blocks[0], &basis.blocks[1]);
        let alpha = run.tridiag.alphas[0][(0, 0)];
        let beta = run.tridiag.next_beta.as_ref().unwrap()[(0, 0)];
        let resid = a.spmm(v1) - v1 * alpha - v2 * beta;
        assert!(resid.norm() < 1e-12 * a.to_dense().norm());
    }

    #[test]
    fn breakdown_relation_holds_without_tail() {
        let a = testmat::diagonal(&[1.0, 2.0, 3.0, 4.0]);
        // Start inside the invariant subspace span{e1, e2}.
        let v = dmatrix![1.0, 0.0; 1.0, 1.0; 0.0, 0.0; 0.0, 0.0];
        let run = block_lanczos(&a, &v, 2, full()).unwrap();
        assert!(run.breakdown);
        let basis = run.basis.unwrap();
        assert!(verify_lanczos_relation(&a, &basis, &run.tridiag) < 1e-14);
    }

    #[test]
    fn rank_deficient_start_is_an_error() {
        let a = testmat::laplacian_1d(6);
        let mut v = random_block(6, 2, 1);
        let c0 = v.column(0).clone_owned();
        v.set_column(1, &c0);
        assert!(matches!(
            block_lanczos(&a, &v, 2, LanczosOptions::default()),
            Err(LinalgError::SingularGram { .. })
        ));
    }

    #[test]
    fn variants_agree_and_scalar_case_is_jacobi() {
        let a = testmat::random_spd(40, 1e2, 5);
        let v = random_block(40, 1, 6);
        let runs: Vec<_> = [
            Orthogonalization::ModifiedGramSchmidt,
            Orthogonalization::Classical,
            Orthogonalization::FullReorthogonalization,
        ]
        .into_iter()
        .map(|o| {
            block_lanczos(
                &a,
                &v,
                6,
                LanczosOptions {
                    orthogonalization: o,
                    keep_basis: false,
                },
            )
            .unwrap()
        })
        .collect();
        let t0 = runs[0].tridiag.densify();
        for r in &runs[1..] {
            assert!((r.tridiag.densify() - &t0).amax() < 1e-10 * t0.norm());
        }
        assert!(runs[0].tridiag.betas.iter().all(|b| b.shape() == (1, 1) && b[(0, 0)] > 0.0));
        assert!(runs[0].basis.is_none());
    }

    #[test]
    fn densify_layouts() {
        let mut t = BlockTridiag::new(2, DMatrix::identity(2, 2));
        let a1 = dmatrix![4.0, 1.0; 1.0, 5.0];
        t.push(a1.clone(), dmatrix![1.0, 2.0; 0.0, 3.0]);
        assert_eq!(t.densify(), a1);
        t.push(dmatrix![6.0, 0.0; 0.0, 7.0], dmatrix![1.0, 0.0; 0.0, 1.0]);
        let d = t.densify();
        assert_eq!(d, d.transpose());
        assert_eq!(d[(2, 0)], 1.0);
        assert_eq!(d[(2, 1)], 2.0);
        assert_eq!(d[(3, 1)], 3.0);
        assert_eq!(d[(3, 0)], 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn projection_is_positive_definite(seed in any::<u64>(), m in 1usize..4) {
                let a = testmat::random_sparse_spd(30, 0.2, seed);
                let v = random_block(30, m, seed ^ 3);
                let k = 6usize.min(30 / m);
                let run = block_lanczos(&a, &v, k, full()).unwrap();
                let t = run.tridiag.densify();
                let eig = testmat::eigenvalues(&t);
                prop_assert!(eig[0] > 0.0);
                let basis = run.basis.unwrap();
                let steps = run.tridiag.steps();
                let vk = basis.leading(steps);
                let orth = (vk.transpose() * &vk - DMatrix::identity(steps * m, steps * m)).amax();
                prop_assert!(orth <= 1e-10);
            }
        }
    }
}
