//! Dense checks of the matrix relations behind the reconstruction.
//!
//! These build full `km × km` matrices and are meant for tests and small
//! diagnostics only.

use crate::bcg::StepCoeffs;
use crate::lanczos::BlockTridiag;
use crate::linalg::{self, Block, Coeff, LinalgError, TriSide};
use crate::sparse::LinearOperator;
use nalgebra::DMatrix;

/// O'Leary-form coefficients of steps `1..=k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OlearyCoefficients {
    /// `γ₀ … γ_{k-1}`
    pub gammas: Vec<Coeff>,
    /// `φ₀⁻¹ … φ_{k-1}⁻¹`
    pub phi_invs: Vec<Coeff>,
    /// `δ₁ … δ_k`
    pub deltas: Vec<Coeff>,
}

impl OlearyCoefficients {
    /// Appends one step of HS/OL or DP output (`φ⁻¹ = ψ` for DP).
    pub fn push(&mut self, c: &StepCoeffs) -> Result<(), LinalgError> {
        let (g, pi, d) = match c {
            StepCoeffs::Ol {
                gamma, delta, phi_inv, ..
            } => (gamma, phi_inv, delta),
            StepCoeffs::Dp {
                gamma, delta, psi_prev, ..
            } => (gamma, psi_prev, delta),
            StepCoeffs::Dr { .. } => {
                return Err(LinalgError::InvalidInput("Dubrulle-R steps have no γ/δ/φ".into()))
            }
        };
        self.gammas.push(g.clone());
        self.phi_invs.push(pi.clone());
        self.deltas.push(d.clone());
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.gammas.len()
    }
}

fn put(t: &mut DMatrix<f64>, i: usize, j: usize, m: usize, b: &Coeff) {
    t.view_mut((i * m, j * m), (m, m)).copy_from(b);
}

/// `T̂_k` with `A R_k = R_k T̂_k − r_k γ_{k-1}⁻¹ φ_{k-1}⁻¹ e_kᵀ`, where
/// `R_k = [r₀ … r_{k-1}]`.
pub fn that_matrix(c: &OlearyCoefficients) -> Result<DMatrix<f64>, LinalgError> {
    let k = c.steps();
    let m = c.gammas.first().map_or(0, |g| g.nrows());
    let mut t = DMatrix::zeros(k * m, k * m);
    let gamma_inv: Vec<Coeff> = c.gammas.iter().map(linalg::general_inverse).collect::<Result<_, _>>()?;
    for j in 0..k {
        let mut diag = &gamma_inv[j] * &c.phi_invs[j];
        if j > 0 {
            diag += &gamma_inv[j - 1] * &c.deltas[j - 1];
            put(&mut t, j - 1, j, m, &-(&gamma_inv[j - 1] * &c.deltas[j - 1]));
        }
        put(&mut t, j, j, m, &diag);
        if j + 1 < k {
            put(&mut t, j + 1, j, m, &-(&gamma_inv[j] * &c.phi_invs[j]));
        }
    }
    Ok(t)
}

/// `T̂_k` assembled as `[I; −I I; …] · diag(γ_j⁻¹φ_j⁻¹) · [I −φ_{j-1}δ_j; …]`.
pub fn that_matrix_factored(c: &OlearyCoefficients) -> Result<DMatrix<f64>, LinalgError> {
    let k = c.steps();
    let m = c.gammas.first().map_or(0, |g| g.nrows());
    let id = Coeff::identity(m, m);
    let mut lower = DMatrix::identity(k * m, k * m);
    let mut mid = DMatrix::zeros(k * m, k * m);
    let mut upper = DMatrix::identity(k * m, k * m);
    for j in 0..k {
        let gi = linalg::general_inverse(&c.gammas[j])?;
        put(&mut mid, j, j, m, &(gi * &c.phi_invs[j]));
        if j + 1 < k {
            put(&mut lower, j + 1, j, m, &-&id);
            let phi = linalg::general_inverse(&c.phi_invs[j])?;
            put(&mut upper, j, j + 1, m, &-(phi * &c.deltas[j]));
        }
    }
    Ok(lower * mid * upper)
}

/// `‖A R_k − R_k T̂_k + r_k γ_{k-1}⁻¹ φ_{k-1}⁻¹ e_kᵀ‖_F` for residuals
/// `r₀ … r_k`.
pub fn three_term_residual<A: LinearOperator + ?Sized>(
    a: &A,
    residuals: &[Block],
    c: &OlearyCoefficients,
) -> Result<f64, LinalgError> {
    let k = c.steps();
    if residuals.len() != k + 1 {
        return Err(LinalgError::InvalidInput(format!(
            "need {} residual blocks, got {}",
            k + 1,
            residuals.len()
        )));
    }
    let rk = concat(&residuals[..k]);
    let that = that_matrix(c)?;
    let (n, m) = residuals[0].shape();
    let mut res = a.apply(&rk) - &rk * that;
    let tail = &residuals[k] * linalg::general_inverse(&c.gammas[k - 1])? * &c.phi_invs[k - 1];
    let mut last = res.view_mut((0, (k - 1) * m), (n, m));
    last += tail;
    Ok(res.norm())
}

/// `[b₀ … b_{k-1}]`
pub fn concat(blocks: &[Block]) -> DMatrix<f64> {
    let (n, m) = blocks[0].shape();
    let mut out = DMatrix::zeros(n, blocks.len() * m);
    for (j, b) in blocks.iter().enumerate() {
        out.view_mut((0, j * m), (n, m)).copy_from(b);
    }
    out
}

/// `diag(r_jᵀr_j) · T̂_k`, which is symmetric.
pub fn weighted_that(grams: &[Coeff], that: &DMatrix<f64>) -> DMatrix<f64> {
    let m = grams[0].nrows();
    let mut g = DMatrix::zeros(grams.len() * m, grams.len() * m);
    for (j, gj) in grams.iter().enumerate() {
        put(&mut g, j, j, m, gj);
    }
    g * that
}

/// Symmetric block tridiagonal `T̃_k` built from O'Leary coefficients and
/// scaling blocks `ρ₀ … ρ_{k-1}`:
///
/// ```text
/// α̃₁      = ρ₀ γ₀⁻¹ φ₀⁻¹ ρ₀⁻¹
/// α̃_{j+1} = ρ_j (γ_j⁻¹ φ_j⁻¹ + γ_{j-1}⁻¹ δ_j) ρ_j⁻¹
/// β̃_{j+1} = ρ_j γ_{j-1}⁻¹ φ_{j-1}⁻¹ ρ_{j-1}⁻¹
/// ```
///
/// With `ρ_j = chol(r_jᵀr_j)` it is the matrix of `A` in the orthonormal
/// basis `(−1)^j r_j ρ_j⁻¹`.
pub fn tilde_t(c: &OlearyCoefficients, rhos: &[Coeff]) -> Result<BlockTridiag, LinalgError> {
    let k = c.steps();
    if rhos.len() < k {
        return Err(LinalgError::InvalidInput("need one ρ per step".into()));
    }
    let m = rhos[0].nrows();
    let id = Coeff::identity(m, m);
    let rho_inv: Vec<Coeff> = rhos
        .iter()
        .take(k)
        .map(|r| linalg::tri_solve(r, &id, TriSide::Left))
        .collect::<Result<_, _>>()?;
    let gamma_inv: Vec<Coeff> = c.gammas.iter().map(linalg::general_inverse).collect::<Result<_, _>>()?;
    let mut t = BlockTridiag::new(m, rhos[0].clone());
    for j in 0..k {
        let mut inner = &gamma_inv[j] * &c.phi_invs[j];
        if j > 0 {
            inner += &gamma_inv[j - 1] * &c.deltas[j - 1];
        }
        let alpha = &rhos[j] * inner * &rho_inv[j];
        let beta_next = if j + 1 < k {
            &rhos[j + 1] * &gamma_inv[j] * &c.phi_invs[j] * &rho_inv[j]
        } else {
            Coeff::zeros(m, m)
        };
        t.push(alpha, beta_next);
    }
    t.next_beta = None;
    Ok(t)
}

/// `U_k = diag(η₁ … η_k)` with `η₁ = I` and `[η_{j+1}, β_{j+1}] = qr(β̃_{j+1}η_j)`;
/// returns `U_k` and `U_kᵀ T̃_k U_k`.
pub fn unitary_similarity(tilde: &BlockTridiag) -> Result<(DMatrix<f64>, DMatrix<f64>), LinalgError> {
    let (k, m) = (tilde.steps(), tilde.m);
    let mut u = DMatrix::zeros(k * m, k * m);
    let mut eta = Coeff::identity(m, m);
    put(&mut u, 0, 0, m, &eta);
    for j in 1..k {
        let (q, _) = linalg::householder_qr(&(&tilde.betas[j - 1] * &eta))?;
        eta = q;
        put(&mut u, j, j, m, &eta);
    }
    let t = u.transpose() * tilde.densify() * &u;
    Ok((u, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcg::{OlBcg, PhiPolicy};
    use crate::bcg::BlockCg;
    use crate::precond::Preconditioner;
    use crate::sparse::{make_rhs, RhsSource, RhsSpec};
    use crate::testmat;

    #[test]
    fn factored_and_direct_that_agree() {
        let a = testmat::random_spd(60, 1e3, 2);
        let (b, _) = make_rhs(&RhsSpec { source: RhsSource::Random { seed: 1 }, m: 2 }, &a).unwrap();
        let id = Preconditioner::identity(60);
        for policy in [PhiPolicy::Identity, PhiPolicy::QrNormalize] {
            let mut s = OlBcg::new(&a, &b, Block::zeros(60, 2), &id, policy).unwrap();
            let mut c = OlearyCoefficients::default();
            let mut rs = vec![s.residual()];
            let mut grams = vec![linalg::gram(&s.residual())];
            for _ in 0..6 {
                c.push(&s.step().unwrap().coeffs).unwrap();
                rs.push(s.residual());
                grams.push(linalg::gram(&s.residual()));
            }
            let t1 = that_matrix(&c).unwrap();
            let t2 = that_matrix_factored(&c).unwrap();
            assert!((&t1 - &t2).norm() < 1e-12 * t1.norm());
            let res = three_term_residual(&a, &rs, &c).unwrap();
            assert!(res < 1e-10 * a.frobenius_norm() * concat(&rs[..6]).norm(), "{res:e}");
            let w = weighted_that(&grams[..6], &t1);
            assert!((&w - w.transpose()).norm() < 1e-10 * w.norm());
        }
    }
}
