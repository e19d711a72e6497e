//! Block conjugate gradient solvers that stay robust when the residual block
//! loses rank, together with recovery of the block Lanczos tridiagonal
//! (Jacobi) matrix from the solver coefficients.
//!
//! The main entry points are [`bcg::run_solver`] for the solvers and
//! [`recon::Reconstructor`] for the Jacobi matrix. The `examples/`
//! directory shows each capability end to end.

pub mod bcg;
pub mod harness;
pub mod lanczos;
pub mod linalg;
pub mod precond;
pub mod recon;
pub mod sparse;
pub mod testmat;
