//! Sparse kernels: CSR storage, stage-operator products, block assembly,
//! preprocessing and ILU(0) / complete LU factorizations.

mod csr;
mod factor;
mod mmio;
mod order;
mod stage;

pub use csr::{combine, CsrMatrix};
pub use factor::{block_solve, factorize, ilu0, preprocess, sparse_lu, FactorKind, FactorizedBlock};
pub use mmio::{format_matrix_market, parse_matrix_market, read_matrix_market, write_matrix_market, MmMatrix};
pub use order::{equilibrate, rcm_ordering};
pub use stage::{assemble_2x2, assemble_shift, stage_apply, StageOperator};
