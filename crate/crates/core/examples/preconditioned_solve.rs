//! Split-preconditioned solves of a 2D Laplacian with Jacobi and incomplete
//! Cholesky, reporting steps and the A-norm error measure ω.

use blockcg::bcg::{run_solver, Problem, SolverConfig, Variant};
use blockcg::precond::Preconditioner;
use blockcg::sparse::{make_rhs, RhsSource, RhsSpec};
use blockcg::testmat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = testmat::laplacian_2d(40);
    let (b, x_true) = make_rhs(&RhsSpec { source: RhsSource::ConstructedSolution { seed: 3 }, m: 4 }, &a)?;
    // Jacobi only rescales this matrix, so it matches the unpreconditioned run.
    let preconditioners = [
        ("none", Preconditioner::identity(a.n())),
        ("jacobi", Preconditioner::jacobi(&a)),
        ("ic(0)", Preconditioner::incomplete_cholesky(&a, 0.0, 0.0)?),
        ("ic(1e-3)", Preconditioner::incomplete_cholesky(&a, 0.0, 1e-3)?),
    ];
    for (name, m) in &preconditioners {
        let problem = Problem { a: &a, b: &b, x0: None, precond: m, x_true: x_true.as_ref() };
        for variant in [Variant::Hs, Variant::Dr, Variant::Dp] {
            let cfg = SolverConfig::new(variant).with_tol(1e-10).with_max_iters(1000);
            let trace = run_solver(&cfg, &problem, &mut |_| {});
            println!(
                "{name:<8} {variant}: {:>4} steps, {:>5} matvecs, final ω {:.1e}",
                trace.iterations(),
                trace.total_matvecs(),
                trace.final_omega().unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
