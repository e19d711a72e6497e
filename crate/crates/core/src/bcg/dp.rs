use super::{
    column_norms, gram_warning, initial_residual, projected_gram, reference, spd_step, BlockCg, InitCoeffs,
    StepCoeffs, StepError, StepReport, Variant,
};
use crate::linalg::{self, Block, Coeff, LinalgError};
use crate::precond::Preconditioner;
use crate::sparse::{CountingOperator, LinearOperator};

/// How the new direction block is formed from `u = z_k + p_{k-1}δ_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirectionUpdate {
    /// `[p_k, ψ_k] = qr(u)` (Dubrulle-P).
    Qr,
    /// Left singular vectors of `u` with `σ_i / σ_max > tol`, never more
    /// columns than the previous direction block (breakdown-free).
    Truncated { tol: f64 },
}

/// Dubrulle-P block CG and its breakdown-free truncated variant.
pub struct DpBcg<'a, A: LinearOperator + ?Sized> {
    a: CountingOperator<'a, A>,
    precond: &'a Preconditioner,
    update: DirectionUpdate,
    x: Block,
    r: Block,
    p: Block,
    psi: Coeff,
    psi0: Coeff,
    gram0: Option<Coeff>,
    k: usize,
    reference: Vec<f64>,
}

impl<'a, A: LinearOperator + ?Sized> DpBcg<'a, A> {
    pub fn new(
        a: &'a A,
        b: &Block,
        x0: Block,
        precond: &'a Preconditioner,
        update: DirectionUpdate,
    ) -> Result<Self, StepError> {
        let a = CountingOperator::new(a);
        let r = initial_residual(&a, b, &x0);
        let z = precond.apply_inv(&r);
        let (p, psi) = new_direction(&z, update, z.ncols()).map_err(spd_step(0, "initial direction"))?;
        let gram0 = (!precond.is_identity()).then(|| linalg::symmetrize(&r.tr_mul(&z)));
        Ok(Self {
            a,
            precond,
            update,
            x: x0,
            r,
            p,
            psi0: psi.clone(),
            gram0,
            psi,
            k: 0,
            reference: reference(column_norms(b)),
        })
    }

    pub fn direction(&self) -> &Block {
        &self.p
    }

    pub fn psi(&self) -> &Coeff {
        &self.psi
    }
}

/// Returns the new orthonormal direction block and `ψ = pᵀu`.
fn new_direction(u: &Block, update: DirectionUpdate, max_width: usize) -> Result<(Block, Coeff), LinalgError> {
    match update {
        DirectionUpdate::Qr => linalg::householder_qr(u),
        DirectionUpdate::Truncated { tol } => {
            let (q, r) = linalg::householder_qr(u)?;
            let svd = r.svd(true, false);
            let uu = svd.u.expect("left singular vectors requested");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
            let smax = svd.singular_values[order[0]];
            let keep: Vec<usize> = order
                .into_iter()
                .filter(|&i| smax > 0.0 && svd.singular_values[i] / smax > tol)
                .take(max_width)
                .collect();
            if keep.is_empty() {
                return Err(LinalgError::InvalidInput("direction block has no significant singular value".into()));
            }
            let basis = uu.select_columns(&keep);
            let p = &q * basis;
            let psi = p.tr_mul(u);
            Ok((p, psi))
        }
    }
}

impl<A: LinearOperator + ?Sized> BlockCg for DpBcg<'_, A> {
    fn variant(&self) -> Variant {
        match self.update {
            DirectionUpdate::Qr => Variant::Dp,
            DirectionUpdate::Truncated { .. } => Variant::Bf,
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
        InitCoeffs::Dp {
            psi: self.psi0.clone(),
            gram: self.gram0.clone(),
        }
    }

    fn matvecs(&self) -> usize {
        self.a.count()
    }

    fn direction_width(&self) -> usize {
        self.p.ncols()
    }

    fn step(&mut self) -> Result<StepReport, StepError> {
        let k = self.k + 1;
        let ap = self.a.apply(&self.p);
        let pap = projected_gram(&self.p, &ap).map_err(spd_step(k, "pᵀAp"))?;
        let cond = linalg::spd_condition(&pap);
        // Galerkin condition p_{k-1}ᵀr_k = 0; with M ≠ I this needs pᵀr rather than pᵀz.
        let gamma = linalg::spd_solve(&pap, &self.p.tr_mul(&self.r)).map_err(spd_step(k, "pᵀAp"))?;

        self.x.gemm(1.0, &self.p, &gamma, 1.0);
        self.r.gemm(-1.0, &ap, &gamma, 1.0);
        let z = self.precond.apply_inv(&self.r);
        let az = self.a.apply(&z);
        let delta = -linalg::spd_solve(&pap, &self.p.tr_mul(&az)).map_err(spd_step(k, "pᵀAp"))?;

        let mut u = z;
        u.gemm(1.0, &self.p, &delta, 1.0);
        let (p, psi) =
            new_direction(&u, self.update, self.p.ncols()).map_err(spd_step(k, "direction orthonormalization"))?;
        let cross = p.tr_mul(&self.r);
        let psi_prev = std::mem::replace(&mut self.psi, psi);
        self.p = p;
        self.k = k;
        Ok(StepReport {
            step: k,
            coeffs: StepCoeffs::Dp {
                gamma,
                delta,
                psi_prev,
                psi: self.psi.clone(),
                cross,
            },
            gram_condition: cond,
            warnings: gram_warning("pᵀAp", cond).into_iter().collect(),
        })
    }
}
