//! Block Lanczos on a 2D Laplacian: extreme Ritz values against the exact
//! spectrum, and the loss of orthogonality without reorthogonalization.

use blockcg::lanczos::{block_lanczos, verify_lanczos_relation, LanczosOptions, Orthogonalization};
use blockcg::sparse::uniform_block;
use blockcg::testmat;
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = testmat::laplacian_2d(20);
    let v = uniform_block(a.n(), 3, 7, 0);
    let exact = testmat::eigenvalues(&a.to_dense());

    for orthogonalization in [Orthogonalization::Classical, Orthogonalization::FullReorthogonalization] {
        let run = block_lanczos(&a, &v, 40, LanczosOptions { orthogonalization, keep_basis: true })?;
        let basis = run.basis.as_ref().expect("basis kept");
        let ritz = testmat::eigenvalues(&run.tridiag.densify());
        let vk = basis.leading(run.tridiag.steps());
        let loss = (vk.tr_mul(&vk) - DMatrix::identity(vk.ncols(), vk.ncols())).norm();
        println!("{orthogonalization:?}");
        println!("  relation residual  {:.1e}", verify_lanczos_relation(&a, basis, &run.tridiag));
        println!("  ‖VᵀV − I‖          {loss:.1e}");
        println!("  largest Ritz value {:.10} (exact {:.10})", ritz.max(), exact.max());
        println!("  smallest           {:.10} (exact {:.10})", ritz.min(), exact.min());
    }
    Ok(())
}
