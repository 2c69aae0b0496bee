//! Sparse and small dense linear algebra used by the integrators and models.
//!
//! Everything here is a pure function of its inputs, so the kernels can be
//! called from any number of worker threads at once.

mod banded;
mod block;
mod csr;
mod dense;
mod moments;

pub use banded::BandedLu;
pub use block::{
    block_diag_assemble, block_diag_solve, solve_block, Block, BlockDiag, BlockSolution, SPARSE_BLOCK_THRESHOLD,
};
pub use csr::{kron, periodic_diff_matrix, periodic_diff_matrix_scaled, spmv, CsrMatrix};
pub use dense::{DenseLu, DenseMatrix};
pub use moments::{chol_psd, weighted_mean_cov, CholeskyFactor, JITTER_LADDER};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed CSR structure: {0}")]
    MalformedCsr(String),
    #[error("allocation of {0} entries failed")]
    Allocation(usize),
    #[error("matrix is singular")]
    Singular,
    #[error("blocks have heterogeneous sizes: block {index} is {rows}x{cols}, expected {expected}x{expected}")]
    HeterogeneousBlocks { index: usize, rows: usize, cols: usize, expected: usize },
    #[error("weights must be nonnegative and sum to 1 (sum = {sum})")]
    InvalidWeights { sum: f64 },
    #[error("covariance is degenerate: factorization failed at maximum jitter")]
    DegenerateCovariance,
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Infinity norm of a vector.
pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
