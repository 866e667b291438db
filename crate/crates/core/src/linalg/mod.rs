//! Dense real linear algebra: matrices, symmetric eigensolvers, Lanczos on
//! implicit operators, Kronecker products, singular values and
//! orthonormalization.

mod eig;
pub mod gemm;
mod lanczos;
mod matrix;
mod operator;
mod ops;
pub mod vector;

pub use eig::{
    eigensolver, eigensolvers, sym_eig_dense, Auto, EigPairs, EigenSolver, Jacobi, TridiagonalQl, AUTO_JACOBI_MAX_DIM, JACOBI_MAX_SWEEPS,
};
pub use lanczos::{lanczos_topk, lanczos_topk_with_residuals, RitzPairs, MAX_RESTARTS};
pub use matrix::Matrix;
pub use operator::{symmetry_defect, to_dense, DenseOperator, FnOperator, LinearOperator};
pub use ops::{kron, kron_vec, kron_with_cap, orthonormalize, projector, svd_values, svd_values_with, KRON_MAX_ENTRIES, ORTHO_DROP_TOL};
