//! Block conjugate gradient solvers.
//!
//! All variants are instances of O'Leary's block CG with a different choice
//! of the free scaling `φ_k` of the direction block:
//!
//! * [`OlBcg`]: `φ_k = I` (HS-BCG) or `φ_k` = inverse R-factor of the new
//!   direction block.
//! * [`DrBcg`]: works with the orthonormal Q-factor `w_k` of the
//!   (preconditioned) residual and never inverts its R-factor `σ_k`.
//! * [`DpBcg`]: orthonormalizes the direction block by Householder QR; the
//!   breakdown-free mode instead keeps only the dominant left singular
//!   vectors, shrinking the block.
//!
//! Each step returns the coefficients that the Jacobi-matrix reconstruction
//! in [`crate::recon`] consumes, so reconstruction costs no extra operator
//! applications.

mod dp;
mod dr;
mod ol;

pub use dp::{DirectionUpdate, DpBcg};
pub use dr::DrBcg;
pub use ol::{OlBcg, PhiPolicy};

use crate::harness::trace::{a_norm_errors, ConvergenceTrace, RunInfo, Termination, TraceRow};
use crate::linalg::{self, Block, Coeff, LinalgError};
use crate::precond::Preconditioner;
use crate::sparse::{CountingOperator, LinearOperator};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

/// Gram condition number above which a step records a warning.
pub const ILL_CONDITIONED_GRAM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// O'Leary BCG with the configured [`PhiPolicy`].
    Ol,
    /// Hestenes–Stiefel BCG, `φ_k = I`.
    Hs,
    /// Dubrulle-R.
    Dr,
    /// Dubrulle-P.
    Dp,
    /// Breakdown-free (SVD-truncated directions).
    Bf,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ol => "ol",
            Variant::Hs => "hs",
            Variant::Dr => "dr",
            Variant::Dp => "dp",
            Variant::Bf => "bf",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ol" => Ok(Variant::Ol),
            "hs" => Ok(Variant::Hs),
            "dr" => Ok(Variant::Dr),
            "dp" => Ok(Variant::Dp),
            "bf" => Ok(Variant::Bf),
            other => Err(format!("unknown variant '{other}' (expected hs, ol, dr, dp or bf)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub max_iters: usize,
    /// Per-column relative residual tolerance; `0` runs to `max_iters`.
    pub tol: f64,
    /// Only used by [`Variant::Ol`].
    pub phi_policy: PhiPolicy,
    /// Relative singular value cutoff, only used by [`Variant::Bf`].
    pub bf_trunc_tol: f64,
}

impl SolverConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            max_iters: 1000,
            tol: 1e-10,
            phi_policy: PhiPolicy::Identity,
            bf_trunc_tol: 1e-10,
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_phi_policy(mut self, phi_policy: PhiPolicy) -> Self {
        self.phi_policy = phi_policy;
        self
    }

    pub fn with_bf_trunc_tol(mut self, tol: f64) -> Self {
        self.bf_trunc_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.tol) {
            return Err(format!("tolerance must be in [0, 1), got {}", self.tol));
        }
        if self.variant == Variant::Bf && !(1e-16..=1e-2).contains(&self.bf_trunc_tol) {
            return Err(format!(
                "BF truncation tolerance must be in [1e-16, 1e-2], got {}",
                self.bf_trunc_tol
            ));
        }
        Ok(())
    }
}

/// Failure of a single iteration.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("step {step}: {what}: {source}")]
pub struct StepError {
    pub step: usize,
    /// Which coefficient could not be formed.
    pub what: &'static str,
    #[source]
    pub source: LinalgError,
}

/// Coefficients available right after the initialization.
#[derive(Debug, Clone, PartialEq)]
pub enum InitCoeffs {
    /// `r₀ᵀz₀` (`z₀ = M⁻¹r₀`).
    Ol { gram: Coeff },
    /// `σ₀` from `[w₀, σ₀] = qr(L⁻¹r₀)`.
    Dr { sigma: Coeff },
    /// `ψ₀` from `[p₀, ψ₀] = qr(z₀)`, and `r₀ᵀz₀` when `M ≠ I`.
    Dp { psi: Coeff, gram: Option<Coeff> },
}

/// Coefficients produced by step `k` (indices as in the recurrences).
#[derive(Debug, Clone, PartialEq)]
pub enum StepCoeffs {
    Ol {
        gamma: Coeff,
        delta: Coeff,
        /// `φ_{k-1}⁻¹`
        phi_inv: Coeff,
        /// `φ_{k-1}`
        phi: Coeff,
        /// `r_kᵀz_k`
        gram: Coeff,
    },
    Dr {
        /// `ξ_{k-1} = (s_{k-1}ᵀAs_{k-1})⁻¹`
        xi: Coeff,
        /// `s_{k-1}ᵀAs_{k-1}`
        sas: Coeff,
        zeta: Coeff,
        sigma: Coeff,
    },
    Dp {
        gamma: Coeff,
        delta: Coeff,
        psi_prev: Coeff,
        psi: Coeff,
        /// `p_kᵀr_k`
        cross: Coeff,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub coeffs: StepCoeffs,
    /// Condition number of the Gram matrix inverted in this step.
    pub gram_condition: f64,
    pub warnings: Vec<String>,
}

/// Common interface of every block CG variant.
pub trait BlockCg {
    fn variant(&self) -> Variant;
    /// Number of completed steps.
    fn iteration(&self) -> usize;
    fn x(&self) -> &Block;
    /// Current residual block `b − A x_k` as carried by the recurrences.
    fn residual(&self) -> Block;
    /// Per-column norms used for stopping (preconditioned for DR with `M ≠ I`).
    fn residual_norms(&self) -> Vec<f64>;
    /// Per-column norms the residual norms are relative to.
    fn reference_norms(&self) -> &[f64];
    fn init_coeffs(&self) -> InitCoeffs;
    /// Operator-column applications so far.
    fn matvecs(&self) -> usize;
    fn step(&mut self) -> Result<StepReport, StepError>;

    fn relative_residuals(&self) -> Vec<f64> {
        self.residual_norms()
            .iter()
            .zip(self.reference_norms())
            .map(|(r, b)| r / b)
            .collect()
    }

    /// DR only: the orthonormal residual factor `w_k`.
    fn residual_basis(&self) -> Option<&Block> {
        None
    }

    /// Direction block width (shrinks only for BF).
    fn direction_width(&self) -> usize;
}

fn column_norms(x: &Block) -> Vec<f64> {
    x.column_iter().map(|c| c.norm()).collect()
}

fn reference(norms: Vec<f64>) -> Vec<f64> {
    norms.into_iter().map(|v| if v > 0.0 { v } else { 1.0 }).collect()
}

fn is_zero(x: &Block) -> bool {
    x.iter().all(|v| *v == 0.0)
}

/// `b − A·x₀`, skipping the product when `x₀ = 0`.
fn initial_residual<A: LinearOperator + ?Sized>(a: &CountingOperator<'_, A>, b: &Block, x0: &Block) -> Block {
    if is_zero(x0) {
        b.clone()
    } else {
        b - a.apply(x0)
    }
}

fn spd_step<'e>(step: usize, what: &'static str) -> impl Fn(LinalgError) -> StepError + 'e {
    move |source| StepError { step, what, source }
}

fn gram_warning(what: &str, cond: f64) -> Option<String> {
    (cond > ILL_CONDITIONED_GRAM).then(|| format!("{what} nearly singular (cond {cond:.1e})"))
}

/// Builds a solver for `config`. `x0 = None` means zero.
pub fn build_solver<'a, A: LinearOperator + ?Sized>(
    config: &SolverConfig,
    a: &'a A,
    b: &Block,
    x0: Option<&Block>,
    precond: &'a Preconditioner,
) -> Result<Box<dyn BlockCg + 'a>, StepError> {
    let x0 = x0.cloned().unwrap_or_else(|| Block::zeros(b.nrows(), b.ncols()));
    Ok(match config.variant {
        Variant::Hs => Box::new(OlBcg::new(a, b, x0, precond, PhiPolicy::Identity)?),
        Variant::Ol => Box::new(OlBcg::new(a, b, x0, precond, config.phi_policy)?),
        Variant::Dr => Box::new(DrBcg::new(a, b, x0, precond)?),
        Variant::Dp => Box::new(DpBcg::new(a, b, x0, precond, DirectionUpdate::Qr)?),
        Variant::Bf => Box::new(DpBcg::new(
            a,
            b,
            x0,
            precond,
            DirectionUpdate::Truncated {
                tol: config.bf_trunc_tol,
            },
        )?),
    })
}

/// Inputs of [`run_solver`] besides the configuration.
pub struct Problem<'a, A: LinearOperator + ?Sized> {
    pub a: &'a A,
    pub b: &'a Block,
    pub x0: Option<&'a Block>,
    pub precond: &'a Preconditioner,
    /// Enables `ω_k` and per-column A-norm errors in the trace.
    pub x_true: Option<&'a Block>,
}

/// What observers see after initialization (`report = None`) and after each step.
pub struct StepEvent<'e> {
    pub step: usize,
    pub solver: &'e dyn BlockCg,
    pub report: Option<&'e StepReport>,
}

/// Iterates until every column's relative residual is at most `tol` or
/// `max_iters` steps have run. Step failures end the run and are recorded in
/// the trace together with the failing step.
pub fn run_solver<A: LinearOperator + ?Sized>(
    config: &SolverConfig,
    problem: &Problem<'_, A>,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> ConvergenceTrace {
    let start = Instant::now();
    let mut trace = ConvergenceTrace::new(config.variant, problem.b.ncols());
    trace.info = RunInfo {
        n: problem.b.nrows(),
        tol: config.tol,
        max_iters: config.max_iters,
        bf_trunc_tol: (config.variant == Variant::Bf).then_some(config.bf_trunc_tol),
        preconditioner: problem.precond.kind().name().to_string(),
        ..RunInfo::default()
    };
    let x_true_norm2 = problem.x_true.map(|xt| problem.a.apply(xt).dot(xt));

    let row = |solver: &dyn BlockCg, warnings: Vec<String>| {
        let errs = problem.x_true.map(|xt| a_norm_errors(problem.a, xt, solver.x()));
        let omega = match (&errs, x_true_norm2) {
            (Some(e), Some(d)) if d > 0.0 => Some((e.iter().map(|v| v * v).sum::<f64>() / d).sqrt()),
            _ => None,
        };
        TraceRow {
            k: solver.iteration(),
            omega,
            rel_res: solver.relative_residuals(),
            a_err: errs,
            wall_secs: start.elapsed().as_secs_f64(),
            matvecs: solver.matvecs(),
            warnings,
        }
    };

    if let Err(e) = config.validate() {
        trace.termination = Termination::Failed {
            step: 0,
            reason: e,
        };
        return trace;
    }

    let mut solver = match build_solver(config, problem.a, problem.b, problem.x0, problem.precond) {
        Ok(s) => s,
        Err(e) => {
            trace.termination = Termination::Failed {
                step: 0,
                reason: e.to_string(),
            };
            return trace;
        }
    };
    let converged = |s: &dyn BlockCg| s.relative_residuals().iter().all(|&r| r <= config.tol);
    let zero = |s: &dyn BlockCg| s.residual_norms().iter().all(|&r| r == 0.0);

    trace.rows.push(row(solver.as_ref(), Vec::new()));
    observer(&StepEvent {
        step: 0,
        solver: solver.as_ref(),
        report: None,
    });
    if zero(solver.as_ref()) || converged(solver.as_ref()) {
        trace.termination = Termination::Converged { step: 0 };
        return trace;
    }

    for _ in 0..config.max_iters {
        match solver.step() {
            Ok(report) => {
                trace.rows.push(row(solver.as_ref(), report.warnings.clone()));
                observer(&StepEvent {
                    step: report.step,
                    solver: solver.as_ref(),
                    report: Some(&report),
                });
                if zero(solver.as_ref()) || converged(solver.as_ref()) {
                    trace.termination = Termination::Converged { step: report.step };
                    return trace;
                }
            }
            Err(e) => {
                trace.termination = Termination::Failed {
                    step: e.step,
                    reason: e.to_string(),
                };
                return trace;
            }
        }
    }
    trace.termination = Termination::MaxIters;
    trace
}

/// Symmetrized `xᵀ(A x)` with the product supplied.
fn projected_gram(x: &Block, ax: &Block) -> Result<Coeff, LinalgError> {
    Ok(linalg::symmetrize(&linalg::block_inner(x, ax)?))
}
