//! Block preconditioners for the stage systems of fully implicit
//! Runge-Kutta schemes applied to linear parabolic PDEs.
//!
//! The stage system `(I_s ⊗ M + δt A ⊗ K) k = b` is preconditioned by
//! factorizations of the s×s Butcher matrix `A` (Schur forms, eigen
//! decomposition, optimized singly-diagonal approximations) combined with
//! sparse factorizations of the m×m diagonal blocks.

pub mod discretize;
pub mod error;
pub mod factory;
pub mod harness;
pub mod krylov;
pub mod precondops;
pub mod scalar;
pub mod smalldense;
pub mod sparse;
pub mod tableau;

pub use error::{Error, Result};
pub use scalar::Scalar;
