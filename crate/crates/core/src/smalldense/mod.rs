//! Dense kernels for the s×s level: the Butcher matrix and its
//! factorizations (Schur forms, eigendecomposition, SVD, LU).

mod lu;
mod matrix;
mod schur;
mod complex_schur;
mod svd;

pub use complex_schur::{eig_from_schur, rsf2csf, EigDecomp};
pub use lu::{dense_inverse, dense_lu_solve, DenseLu};
pub use matrix::{CDenseMat, DenseMat, DenseMatrix};
pub use schur::{
    block_eigenvalues, orient_2x2_blocks, real_schur, reorder_schur, OrderKey, SchurForm,
};
pub use svd::{cond2, norm2, svd_small};
