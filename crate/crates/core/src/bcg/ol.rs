use super::{
    column_norms, gram_warning, initial_residual, projected_gram, reference, spd_step, BlockCg, InitCoeffs,
    StepCoeffs, StepError, StepReport, Variant,
};
use crate::linalg::{self, Block, Coeff, LinalgError, TriSide};
use crate::precond::Preconditioner;
use crate::sparse::{CountingOperator, LinearOperator};

/// Choice of the direction scaling `φ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiPolicy {
    /// `φ_k = I`; the Hestenes–Stiefel recurrence.
    #[default]
    Identity,
    /// `[p_k, R] = qr(z_k + p_{k-1}δ_k)`, `φ_k = R⁻¹`.
    QrNormalize,
}

/// O'Leary block CG, optionally preconditioned (`z = M⁻¹r`, Gram `rᵀz`).
pub struct OlBcg<'a, A: LinearOperator + ?Sized> {
    a: CountingOperator<'a, A>,
    precond: &'a Preconditioner,
    policy: PhiPolicy,
    x: Block,
    r: Block,
    p: Block,
    /// `r_kᵀz_k`
    gram: Coeff,
    gram0: Coeff,
    phi_inv: Coeff,
    k: usize,
    reference: Vec<f64>,
}

impl<'a, A: LinearOperator + ?Sized> OlBcg<'a, A> {
    pub fn new(
        a: &'a A,
        b: &Block,
        x0: Block,
        precond: &'a Preconditioner,
        policy: PhiPolicy,
    ) -> Result<Self, StepError> {
        let a = CountingOperator::new(a);
        let r = initial_residual(&a, b, &x0);
        let z = precond.apply_inv(&r);
        let gram = linalg::symmetrize(&r.tr_mul(&z));
        let (p, phi_inv) = scale_direction(z, policy).map_err(spd_step(0, "direction normalization"))?;
        Ok(Self {
            a,
            precond,
            policy,
            x: x0,
            r,
            p,
            gram0: gram.clone(),
            gram,
            phi_inv,
            k: 0,
            reference: reference(column_norms(b)),
        })
    }

    /// Current direction block `p_k`.
    pub fn direction(&self) -> &Block {
        &self.p
    }

    fn try_step(&mut self) -> Result<StepReport, StepError> {
        let k = self.k + 1;
        let ap = self.a.apply(&self.p);
        let pap = projected_gram(&self.p, &ap).map_err(spd_step(k, "pᵀAp"))?;
        let cond = linalg::spd_condition(&pap);

        // γ = (pᵀAp)⁻¹ φᵀ rᵀz with φ = R⁻¹ for the QR policy.
        let phi_t_gram = match self.policy {
            PhiPolicy::Identity => self.gram.clone(),
            PhiPolicy::QrNormalize => linalg::tri_solve(&self.phi_inv, &self.gram, TriSide::LeftTransposed)
                .map_err(spd_step(k, "φ"))?,
        };
        let gamma = linalg::spd_solve(&pap, &phi_t_gram).map_err(spd_step(k, "pᵀAp"))?;

        self.x.gemm(1.0, &self.p, &gamma, 1.0);
        self.r.gemm(-1.0, &ap, &gamma, 1.0);
        let z = self.precond.apply_inv(&self.r);
        let gram_new = linalg::symmetrize(&self.r.tr_mul(&z));

        // δ = φ⁻¹ (rᵀz)⁻¹ r_newᵀz_new
        let mut delta = linalg::spd_solve(&self.gram, &gram_new).map_err(spd_step(k, "rᵀz"))?;
        if self.policy == PhiPolicy::QrNormalize {
            delta = &self.phi_inv * delta;
        }
        let mut u = z;
        u.gemm(1.0, &self.p, &delta, 1.0);
        let (p, phi_inv_new) = scale_direction(u, self.policy).map_err(spd_step(k, "direction normalization"))?;

        let phi_inv_prev = std::mem::replace(&mut self.phi_inv, phi_inv_new);
        let phi_prev = match self.policy {
            PhiPolicy::Identity => Coeff::identity(phi_inv_prev.nrows(), phi_inv_prev.ncols()),
            PhiPolicy::QrNormalize => linalg::tri_solve(
                &phi_inv_prev,
                &Coeff::identity(phi_inv_prev.nrows(), phi_inv_prev.ncols()),
                TriSide::Left,
            )
            .map_err(spd_step(k, "φ"))?,
        };
        self.p = p;
        self.gram = gram_new.clone();
        self.k = k;
        Ok(StepReport {
            step: k,
            coeffs: StepCoeffs::Ol {
                gamma,
                delta,
                phi_inv: phi_inv_prev,
                phi: phi_prev,
                gram: gram_new,
            },
            gram_condition: cond,
            warnings: gram_warning("pᵀAp", cond).into_iter().collect(),
        })
    }
}

fn scale_direction(u: Block, policy: PhiPolicy) -> Result<(Block, Coeff), LinalgError> {
    match policy {
        PhiPolicy::Identity => {
            let m = u.ncols();
            Ok((u, Coeff::identity(m, m)))
        }
        PhiPolicy::QrNormalize => {
            let (q, r) = linalg::householder_qr(&u)?;
            // Rejects a singular R before anyone inverts it.
            linalg::tri_solve(&r, &Coeff::identity(r.nrows(), r.ncols()), TriSide::Left)?;
            Ok((q, r))
        }
    }
}

impl<A: LinearOperator + ?Sized> BlockCg for OlBcg<'_, A> {
    fn variant(&self) -> Variant {
        match self.policy {
            PhiPolicy::Identity => Variant::Hs,
            PhiPolicy::QrNormalize => Variant::Ol,
        }
    }

    fn iteration(&self) -> usize {
        self.k
    }

    fn x(&self) -> &Block {
        &self.x
    }

    fn residual(&self) -> Block {
        self.r.clone()
    }

    fn residual_norms(&self) -> Vec<f64> {
        column_norms(&self.r)
    }

    fn reference_norms(&self) -> &[f64] {
        &self.reference
    }

    fn init_coeffs(&self) -> InitCoeffs {
        InitCoeffs::Ol {
            gram: self.gram0.clone(),
        }
    }

    fn matvecs(&self) -> usize {
        self.a.count()
    }

    fn step(&mut self) -> Result<StepReport, StepError> {
        self.try_step()
    }

    fn direction_width(&self) -> usize {
        self.p.ncols()
    }
}
