//! Breakdown-free block CG drops search directions whose singular values fall
//! below a relative cutoff; DP-BCG keeps the full block.
//!
//! Half of the right-hand sides are combinations of the other half, so the
//! block has rank 3. BF shrinks to three directions and needs fewer matrix
//! products here. DP keeps six, three of which come from the QR completion
//! and slow it down without harming the final accuracy.

use blockcg::bcg::{run_solver, Problem, SolverConfig, Variant};
use blockcg::linalg::Block;
use blockcg::precond::Preconditioner;
use blockcg::sparse::{uniform_block, LinearOperator};
use blockcg::testmat;

fn main() {
    let a = testmat::random_spd(400, 1e3, 4);
    let x3 = uniform_block(a.n(), 3, 5, 2);
    let x_true = Block::from_fn(a.n(), 6, |i, j| if j < 3 { x3[(i, j)] } else { x3[(i, j - 3)] + 0.5 * x3[(i, (j + 1) % 3)] });
    let b = a.apply(&x_true);
    let id = Preconditioner::identity(a.n());
    let problem = Problem { a: &a, b: &b, x0: None, precond: &id, x_true: Some(&x_true) };

    let mut configs = vec![SolverConfig::new(Variant::Dp)];
    configs.extend([1e-7, 1e-10].map(|t| SolverConfig::new(Variant::Bf).with_bf_trunc_tol(t)));
    for cfg in configs {
        let cfg = cfg.with_tol(1e-10).with_max_iters(2000);
        let mut widths = Vec::new();
        let trace = run_solver(&cfg, &problem, &mut |ev| widths.push(ev.solver.direction_width()));
        let label = match cfg.variant {
            Variant::Bf => format!("bf({:.0e})", cfg.bf_trunc_tol),
            v => v.to_string(),
        };
        println!(
            "{label:<9} steps {:>4}  matvecs {:>5}  final ω {:.1e}  width {} → {}",
            trace.iterations(),
            trace.total_matvecs(),
            trace.final_omega().unwrap_or(f64::NAN),
            widths.first().unwrap_or(&0),
            widths.last().unwrap_or(&0)
        );
    }
}
