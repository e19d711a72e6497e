//! Thin Householder QR of a rank-deficient block.
//!
//! The second column duplicates the first. `q` is still orthonormal; the
//! zero on the diagonal of `r` marks the direction that `v` does not contain.

use blockcg::linalg::{self, Block, Coeff};
use blockcg::sparse::uniform_block;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = uniform_block(8, 2, 1, 0);
    let v = Block::from_fn(8, 3, |i, j| base[(i, if j == 2 { 1 } else { 0 })]);

    let (q, r) = linalg::householder_qr(&v)?;
    println!("r =\n{r:.3}");
    println!("‖qr − v‖      = {:.1e}", (&q * &r - &v).norm());
    println!("‖qᵀq − I‖     = {:.1e}", (q.tr_mul(&q) - Coeff::identity(3, 3)).norm());

    // The Gram matrix of the same block has no Cholesky factor.
    match linalg::cholesky_upper(&linalg::gram(&v)) {
        Ok(_) => println!("cholesky succeeded"),
        Err(e) => println!("cholesky(vᵀv): {e}"),
    }
    Ok(())
}
