use super::{
    column_norms, gram_warning, initial_residual, projected_gram, reference, spd_step, BlockCg, InitCoeffs,
    StepCoeffs, StepError, StepReport, Variant,
};
use crate::linalg::{self, Block, Coeff};
use crate::precond::Preconditioner;
use crate::sparse::{CountingOperator, LinearOperator};

/// Dubrulle-R block CG with split preconditioner `M = LLᵀ`.
///
/// The preconditioned residual is carried as `L⁻¹r_k = w_k σ_k` with
/// orthonormal `w_k`; `σ_k` is only ever multiplied, never inverted, so a
/// rank-deficient residual block does not stop the iteration.
pub struct DrBcg<'a, A: LinearOperator + ?Sized> {
    a: CountingOperator<'a, A>,
    precond: &'a Preconditioner,
    x: Block,
    w: Block,
    s: Block,
    sigma: Coeff,
    sigma0: Coeff,
    k: usize,
    reference: Vec<f64>,
}

impl<'a, A: LinearOperator + ?Sized> DrBcg<'a, A> {
    pub fn new(a: &'a A, b: &Block, x0: Block, precond: &'a Preconditioner) -> Result<Self, StepError> {
        let a = CountingOperator::new(a);
        let r = initial_residual(&a, b, &x0);
        let (w, sigma) = linalg::householder_qr(&precond.solve_lower(&r)).map_err(spd_step(0, "qr(L⁻¹r₀)"))?;
        let s = precond.solve_upper(&w);
        let base = if precond.is_identity() {
            column_norms(b)
        } else {
            column_norms(&precond.solve_lower(b))
        };
        Ok(Self {
            a,
            precond,
            x: x0,
            w,
            s,
            sigma0: sigma.clone(),
            sigma,
            k: 0,
            reference: reference(base),
        })
    }

    pub fn sigma(&self) -> &Coeff {
        &self.sigma
    }

    pub fn search_block(&self) -> &Block {
        &self.s
    }
}

impl<A: LinearOperator + ?Sized> BlockCg for DrBcg<'_, A> {
    fn variant(&self) -> Variant {
        Variant::Dr
    }

    fn iteration(&self) -> usize {
        self.k
    }

    fn x(&self) -> &Block {
        &self.x
    }

    fn residual(&self) -> Block {
        self.precond.apply_lower(&(&self.w * &self.sigma))
    }

    /// Column norms of `σ_k`, i.e. of `L⁻¹r_k`.
    fn residual_norms(&self) -> Vec<f64> {
        column_norms(&self.sigma)
    }

    fn reference_norms(&self) -> &[f64] {
        &self.reference
    }

    fn init_coeffs(&self) -> InitCoeffs {
        InitCoeffs::Dr {
            sigma: self.sigma0.clone(),
        }
    }

    fn matvecs(&self) -> usize {
        self.a.count()
    }

    fn residual_basis(&self) -> Option<&Block> {
        Some(&self.w)
    }

    fn direction_width(&self) -> usize {
        self.s.ncols()
    }

    fn step(&mut self) -> Result<StepReport, StepError> {
        let k = self.k + 1;
        let m = self.sigma.ncols();
        let as_ = self.a.apply(&self.s);
        let sas = projected_gram(&self.s, &as_).map_err(spd_step(k, "sᵀAs"))?;
        let cond = linalg::spd_condition(&sas);
        let xi = linalg::spd_solve(&sas, &Coeff::identity(m, m)).map_err(spd_step(k, "sᵀAs"))?;
        let xi = linalg::symmetrize(&xi);

        self.x.gemm(1.0, &self.s, &(&xi * &self.sigma), 1.0);
        let mut u = self.w.clone();
        u.gemm(-1.0, &self.precond.solve_lower(&as_), &xi, 1.0);
        let (w, zeta) = linalg::householder_qr(&u).map_err(spd_step(k, "qr(w - L⁻¹Asξ)"))?;
        let mut s = self.precond.solve_upper(&w);
        s.gemm(1.0, &self.s, &zeta.transpose(), 1.0);
        self.sigma = &zeta * &self.sigma;
        self.w = w;
        self.s = s;
        self.k = k;
        Ok(StepReport {
            step: k,
            coeffs: StepCoeffs::Dr {
                xi,
                sas,
                zeta,
                sigma: self.sigma.clone(),
            },
            gram_condition: cond,
            warnings: gram_warning("sᵀAs", cond).into_iter().collect(),
        })
    }
}
