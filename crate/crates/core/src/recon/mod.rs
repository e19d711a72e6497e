//! Block Jacobi matrix recovered from block CG coefficients.
//!
//! The block Lanczos process started from `r₀` and the block CG iteration
//! span the same Krylov spaces, so `T_k` and its block `LDLᵀ` factors can be
//! rebuilt from the small coefficient matrices a BCG variant already
//! computes. For O'Leary-type coefficients (HS, OL, DP):
//!
//! ```text
//! σ₀ = chol(r₀ᵀr₀),  β₁ = σ₀,  θ₀ = I,  ℓ₀ = 0
//! τ_j   = γ_{j-1}⁻¹ φ_{j-1}⁻¹ σ_{j-1}⁻¹ θ_{j-1}
//! d_j   = θ_{j-1}ᵀ σ_{j-1} τ_j
//! α_j   = d_j + ℓ_{j-1} β_jᵀ
//! σ_j   = chol(r_jᵀr_j)
//! [θ_j, β_{j+1}] = qr(σ_j τ_j)
//! ℓ_j   = θ_jᵀ σ_j σ_{j-1}⁻¹ θ_{j-1}
//! ```
//!
//! DP uses `φ⁻¹ = ψ` and `r_jᵀr_j = ψ_jᵀ p_jᵀ r_j`. DR needs no inverse at
//! all:
//!
//! ```text
//! τ̃_j = (s_{j-1}ᵀAs_{j-1}) θ_{j-1},   d_j = θ_{j-1}ᵀ τ̃_j
//! [θ_j, β_{j+1}] = qr(ζ_j τ̃_j),       ℓ_j = θ_jᵀ ζ_j θ_{j-1}
//! ```
//!
//! With a preconditioner, the result is the Jacobi matrix of `L⁻¹AL⁻ᵀ`
//! started from `L⁻¹r₀`.

pub mod oracle;

use crate::bcg::{BlockCg, InitCoeffs, Problem, SolverConfig, StepCoeffs};
use crate::harness::trace::ConvergenceTrace;
use crate::lanczos::BlockTridiag;
use crate::linalg::{self, Block, Coeff, LinalgError, TriSide};
use crate::sparse::LinearOperator;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("reconstruction stopped at step {step}: {source}")]
pub struct ReconError {
    pub step: usize,
    #[source]
    pub source: LinalgError,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    /// Carries `σ_{k-1}`.
    Oleary { sigma: Coeff },
    Dubrulle,
}

/// Accumulates `T_k = L_k D_k L_kᵀ` step by step.
///
/// The first singular `σ_k` (a rank-deficient residual block, or one that
/// has converged to zero) stops the reconstruction; the solver itself is not
/// affected and [`Reconstructor::failure`] records the step.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    kind: Kind,
    tridiag: BlockTridiag,
    theta: Coeff,
    ell: Coeff,
    ells: Vec<Coeff>,
    ds: Vec<Coeff>,
    failure: Option<ReconError>,
}

impl Reconstructor {
    pub fn new(init: &InitCoeffs) -> Self {
        let (sigma0, dubrulle) = match init {
            InitCoeffs::Ol { gram } => (linalg::cholesky_upper(gram), false),
            InitCoeffs::Dp { psi, gram: None } => (Ok(psi.clone()), false),
            InitCoeffs::Dp { gram: Some(g), .. } => (linalg::cholesky_upper(g), false),
            InitCoeffs::Dr { sigma } => (Ok(sigma.clone()), true),
        };
        let m = match init {
            InitCoeffs::Ol { gram } | InitCoeffs::Dp { gram: Some(gram), .. } => gram.nrows(),
            InitCoeffs::Dp { psi, .. } => psi.nrows(),
            InitCoeffs::Dr { sigma } => sigma.nrows(),
        };
        let id = Coeff::identity(m, m);
        let (beta1, failure) = match sigma0 {
            Ok(s) => (s, None),
            Err(source) => (Coeff::zeros(m, m), Some(ReconError { step: 0, source })),
        };
        let mut r = Self {
            kind: if dubrulle {
                Kind::Dubrulle
            } else {
                Kind::Oleary { sigma: beta1.clone() }
            },
            tridiag: BlockTridiag::new(m, beta1.clone()),
            theta: id.clone(),
            ell: Coeff::zeros(m, m),
            ells: Vec::new(),
            ds: Vec::new(),
            failure,
        };
        if r.failure.is_none() && !dubrulle {
            // σ₀ must be invertible for the first τ.
            if let Err(source) = linalg::tri_solve(&beta1, &id, TriSide::Left) {
                r.failure = Some(ReconError { step: 0, source });
            }
        }
        r
    }

    /// Consumes the coefficients of one solver step. Errors are also kept in
    /// [`Reconstructor::failure`]; later calls are ignored.
    pub fn observe(&mut self, coeffs: &StepCoeffs) -> Result<(), ReconError> {
        if let Some(f) = &self.failure {
            return Err(f.clone());
        }
        let step = self.steps() + 1;
        let out = match coeffs {
            StepCoeffs::Ol {
                gamma, phi_inv, gram, ..
            } => self.oleary_step(gamma, phi_inv, gram),
            StepCoeffs::Dp {
                gamma,
                psi_prev,
                psi,
                cross,
                ..
            } => {
                if psi.shape() != psi_prev.shape() {
                    Err(LinalgError::InvalidInput("direction block changed width".into()))
                } else {
                    let gram = linalg::symmetrize(&(psi.transpose() * cross));
                    self.oleary_step(gamma, psi_prev, &gram)
                }
            }
            StepCoeffs::Dr { sas, zeta, .. } => self.dubrulle_step(sas, zeta),
        };
        out.map_err(|source| {
            let e = ReconError { step, source };
            self.failure = Some(e.clone());
            e
        })
    }

    fn beta_k(&self) -> Coeff {
        self.tridiag.next_beta.clone().unwrap_or_else(|| self.tridiag.beta1.clone())
    }

    fn finish(&mut self, d: Coeff, theta: Coeff, beta_next: Coeff, ell: Coeff) {
        let alpha = linalg::symmetrize(&(&d + &self.ell * self.beta_k().transpose()));
        self.tridiag.push(alpha, beta_next);
        if !self.ds.is_empty() {
            self.ells.push(self.ell.clone());
        }
        self.ds.push(d);
        self.theta = theta;
        self.ell = ell;
    }

    fn oleary_step(&mut self, gamma: &Coeff, phi_inv: &Coeff, gram: &Coeff) -> Result<(), LinalgError> {
        let Kind::Oleary { sigma: sigma_prev } = &self.kind else {
            return Err(LinalgError::InvalidInput("O'Leary coefficients fed to a Dubrulle-R reconstruction".into()));
        };
        let m = gamma.nrows();
        // τ = γ⁻¹ φ⁻¹ σ_{k-1}⁻¹ θ_{k-1}
        let s_inv_theta = linalg::tri_solve(sigma_prev, &self.theta, TriSide::Left)?;
        let tau = linalg::general_solve(gamma, &(phi_inv * s_inv_theta))?;
        let d = linalg::symmetrize(&(self.theta.transpose() * sigma_prev * &tau));
        let sigma = linalg::cholesky_upper(gram)?;
        let (theta, beta_next) = linalg::householder_qr(&(&sigma * &tau))?;
        let s_sinv = linalg::tri_solve(sigma_prev, &Coeff::identity(m, m), TriSide::Right)?;
        let ell = theta.transpose() * &sigma * s_sinv * &self.theta;
        self.finish(d, theta, beta_next, ell);
        self.kind = Kind::Oleary { sigma };
        Ok(())
    }

    fn dubrulle_step(&mut self, sas: &Coeff, zeta: &Coeff) -> Result<(), LinalgError> {
        if !matches!(self.kind, Kind::Dubrulle) {
            return Err(LinalgError::InvalidInput("Dubrulle-R coefficients fed to an O'Leary reconstruction".into()));
        }
        let tau = sas * &self.theta;
        let d = linalg::symmetrize(&(self.theta.transpose() * &tau));
        let (theta, beta_next) = linalg::householder_qr(&(zeta * &tau))?;
        let ell = theta.transpose() * zeta * &self.theta;
        self.finish(d, theta, beta_next, ell);
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.tridiag.steps()
    }

    pub fn tridiag(&self) -> &BlockTridiag {
        &self.tridiag
    }

    pub fn failure(&self) -> Option<&ReconError> {
        self.failure.as_ref()
    }

    /// `ℓ₁ … ℓ_{k-1}` (subdiagonal blocks of `L_k`).
    pub fn ells(&self) -> &[Coeff] {
        &self.ells
    }

    /// `d₁ … d_k`
    pub fn ds(&self) -> &[Coeff] {
        &self.ds
    }

    /// `θ_k`
    pub fn theta(&self) -> &Coeff {
        &self.theta
    }

    /// Unit block lower bidiagonal `L_k`.
    pub fn densify_l(&self) -> DMatrix<f64> {
        let (k, m) = (self.ds.len(), self.tridiag.m);
        let mut l = DMatrix::identity(k * m, k * m);
        for (j, e) in self.ells.iter().enumerate() {
            l.view_mut(((j + 1) * m, j * m), (m, m)).copy_from(e);
        }
        l
    }

    /// Block diagonal `D_k`.
    pub fn densify_d(&self) -> DMatrix<f64> {
        let (k, m) = (self.ds.len(), self.tridiag.m);
        let mut d = DMatrix::zeros(k * m, k * m);
        for (j, dj) in self.ds.iter().enumerate() {
            d.view_mut((j * m, j * m), (m, m)).copy_from(dj);
        }
        d
    }

    /// Lanczos block `v_{k+1}` from the current residual data: pass `r_k`
    /// (`L⁻¹r_k` when preconditioned) for O'Leary-type variants and `w_k`
    /// for DR.
    pub fn lanczos_block(&self, x: &Block) -> Result<Block, LinalgError> {
        let sign = if self.steps().is_multiple_of(2) { 1.0 } else { -1.0 };
        let scaled = match &self.kind {
            Kind::Oleary { sigma } => linalg::tri_solve(sigma, x, TriSide::Right)?,
            Kind::Dubrulle => x.clone(),
        };
        Ok(scaled * &self.theta * sign)
    }
}

/// Runs a solver with a [`Reconstructor`] attached.
pub fn solve_and_reconstruct<A: LinearOperator + ?Sized>(
    config: &SolverConfig,
    problem: &Problem<'_, A>,
    mut observer: impl FnMut(&dyn BlockCg, &Reconstructor),
) -> (ConvergenceTrace, Option<Reconstructor>) {
    let mut recon: Option<Reconstructor> = None;
    let trace = crate::bcg::run_solver(config, problem, &mut |ev| {
        match ev.report {
            None => recon = Some(Reconstructor::new(&ev.solver.init_coeffs())),
            Some(rep) => {
                if let Some(r) = recon.as_mut() {
                    // Failures are recorded inside the reconstructor.
                    let _ = r.observe(&rep.coeffs);
                }
            }
        }
        if let Some(r) = &recon {
            observer(ev.solver, r);
        }
    });
    (trace, recon)
}
