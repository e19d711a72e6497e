//! A right-hand side block with two identical columns.
//!
//! Hestenes-Stiefel block CG needs `(pᵀAp)⁻¹` and stops at the first step.
//! The variants that orthonormalize their blocks with QR carry on.

use blockcg::bcg::{run_solver, Problem, SolverConfig, Variant};
use blockcg::harness::trace::Termination;
use blockcg::precond::Preconditioner;
use blockcg::sparse::{make_rhs, RhsSource, RhsSpec};
use blockcg::testmat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = testmat::random_spd_linear(200, 1e3, 1);
    let (b, _) = make_rhs(&RhsSpec { source: RhsSource::DuplicateColumn { seed: 2 }, m: 2 }, &a)?;
    let id = Preconditioner::identity(a.n());
    let problem = Problem { a: &a, b: &b, x0: None, precond: &id, x_true: None };

    for variant in [Variant::Hs, Variant::Dr, Variant::Dp, Variant::Bf] {
        let cfg = SolverConfig::new(variant).with_tol(1e-10).with_max_iters(500);
        let trace = run_solver(&cfg, &problem, &mut |_| {});
        let last = trace.rows.last().expect("initial row");
        let status = match &trace.termination {
            Termination::Converged { step } => format!("converged at step {step}"),
            Termination::MaxIters => "no convergence".to_string(),
            Termination::Failed { reason, .. } => format!("stopped: {reason}"),
        };
        println!("{variant:>2}: {status}; max relative residual {:.1e}", last.max_rel_res());
    }
    Ok(())
}
