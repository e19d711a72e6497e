//! Recovers the block Jacobi matrix `T_k` from the coefficients of a running
//! solver, with no extra matrix products, and compares it with block Lanczos.
//!
//! The eigenvalues of `T_k` are the Ritz values, so the solver run yields
//! spectral estimates of `A` for free.

use blockcg::bcg::{Problem, SolverConfig, Variant};
use blockcg::lanczos::{block_lanczos, LanczosOptions, Orthogonalization};
use blockcg::precond::Preconditioner;
use blockcg::recon::solve_and_reconstruct;
use blockcg::sparse::{make_rhs, RhsSource, RhsSpec};
use blockcg::testmat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = testmat::random_spd(300, 1e4, 3);
    let (b, _) = make_rhs(&RhsSpec { source: RhsSource::Random { seed: 1 }, m: 4 }, &a)?;
    let id = Preconditioner::identity(a.n());
    let problem = Problem { a: &a, b: &b, x0: None, precond: &id, x_true: None };
    let k = 12;

    let opts = LanczosOptions { orthogonalization: Orthogonalization::FullReorthogonalization, keep_basis: false };
    let reference = block_lanczos(&a, &b, k, opts)?.tridiag.densify();

    for variant in [Variant::Hs, Variant::Dr, Variant::Dp] {
        let cfg = SolverConfig::new(variant).with_tol(0.0).with_max_iters(k);
        let (_, recon) = solve_and_reconstruct(&cfg, &problem, |_, _| {});
        let recon = recon.expect("full-rank start");
        let t = recon.tridiag().densify();
        let ldl = recon.densify_l() * recon.densify_d() * recon.densify_l().transpose();
        let ritz = testmat::eigenvalues(&t);
        println!(
            "{variant}: ‖T − T_lanczos‖/‖T‖ = {:.1e}, ‖LDLᵀ − T‖/‖T‖ = {:.1e}, Ritz range [{:.4}, {:.1}]",
            (&t - &reference).norm() / reference.norm(),
            (&ldl - &t).norm() / t.norm(),
            ritz.min(),
            ritz.max()
        );
    }
    println!("spectrum of A: [1, 1e4]");
    Ok(())
}
