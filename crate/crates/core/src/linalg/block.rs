use rayon::prelude::*;

use super::{BandedLu, CsrMatrix, DenseLu, DenseMatrix, LinalgError, Result};
use crate::instrument::{self, Counter};

/// Blocks larger than this are factored with the sparse (banded) LU.
pub const SPARSE_BLOCK_THRESHOLD: usize = 64;

/// One square diagonal block.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

impl Block {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Block::Dense(d) => (d.nrows(), d.ncols()),
            Block::Sparse(s) => (s.nrows(), s.ncols()),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Block::Dense(d) => d[(i, j)],
            Block::Sparse(s) => s.get(i, j),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Block::Dense(d) => d.matvec(x),
            Block::Sparse(s) => super::spmv(s, x),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        match self {
            Block::Dense(d) => d.norm_inf(),
            Block::Sparse(s) => s.norm_inf(),
        }
    }
}

/// Logical block-diagonal matrix `diag(blocks[0], ..., blocks[N-1])`.
#[derive(Debug, Clone)]
pub struct BlockDiag {
    block_dim: usize,
    blocks: Vec<Block>,
}

impl BlockDiag {
    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn nblocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.block_dim * self.blocks.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Entry of the logical matrix; off-block entries are zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (bi, bj) = (i / self.block_dim, j / self.block_dim);
        if bi != bj {
            return 0.0;
        }
        self.blocks[bi].get(i % self.block_dim, j % self.block_dim)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim();
        let mut d = DenseMatrix::zeros(n, n);
        for (b, block) in self.blocks.iter().enumerate() {
            let off = b * self.block_dim;
            for i in 0..self.block_dim {
                for j in 0..self.block_dim {
                    d[(off + i, off + j)] = block.get(i, j);
                }
            }
        }
        d
    }

    /// Like [`block_diag_solve`] but solves blocks on the rayon pool.
    /// The result does not depend on the schedule.
    pub fn solve_par(&self, b: &[f64]) -> Result<BlockSolution> {
        self.check_rhs(b)?;
        let d = self.block_dim;
        let mut x = vec![0.0; b.len()];
        let failures: Vec<Option<usize>> = x
            .par_chunks_mut(d)
            .zip(b.par_chunks(d))
            .zip(self.blocks.par_iter())
            .enumerate()
            .map(|(k, ((xk, bk), block))| solve_into(block, bk, xk).err().map(|_| k))
            .collect();
        Ok(BlockSolution { x, singular: failures.into_iter().flatten().collect() })
    }

    fn check_rhs(&self, b: &[f64]) -> Result<()> {
        if b.len() != self.dim() {
            return Err(LinalgError::DimensionMismatch { expected: self.dim(), got: b.len() });
        }
        Ok(())
    }
}

/// Result of a block-diagonal solve. Entries belonging to singular blocks
/// are NaN; their indices are listed in `singular`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSolution {
    pub x: Vec<f64>,
    pub singular: Vec<usize>,
}

pub fn block_diag_assemble(blocks: Vec<Block>) -> Result<BlockDiag> {
    instrument::bump(Counter::BlockDiagAssemble);
    let Some(first) = blocks.first() else {
        return Err(LinalgError::InvalidDimension("block-diagonal matrix needs at least one block".into()));
    };
    let (d, _) = first.shape();
    for (index, b) in blocks.iter().enumerate() {
        let (rows, cols) = b.shape();
        if rows != d || cols != d {
            return Err(LinalgError::HeterogeneousBlocks { index, rows, cols, expected: d });
        }
    }
    Ok(BlockDiag { block_dim: d, blocks })
}

/// Solves each block independently. Singular blocks do not abort the solve.
pub fn block_diag_solve(a: &BlockDiag, b: &[f64]) -> Result<BlockSolution> {
    a.check_rhs(b)?;
    let d = a.block_dim;
    let mut x = vec![0.0; b.len()];
    let mut singular = Vec::new();
    for (k, block) in a.blocks.iter().enumerate() {
        if solve_into(block, &b[k * d..(k + 1) * d], &mut x[k * d..(k + 1) * d]).is_err() {
            singular.push(k);
        }
    }
    Ok(BlockSolution { x, singular })
}

fn solve_into(block: &Block, b: &[f64], x: &mut [f64]) -> Result<()> {
    match solve_block(block, b) {
        Ok(v) => {
            x.copy_from_slice(&v);
            Ok(())
        }
        Err(e) => {
            x.iter_mut().for_each(|v| *v = f64::NAN);
            Err(e)
        }
    }
}

/// Solves a single block: dense LU up to [`SPARSE_BLOCK_THRESHOLD`],
/// banded sparse LU above it.
pub fn solve_block(block: &Block, b: &[f64]) -> Result<Vec<f64>> {
    let (n, _) = block.shape();
    if n > SPARSE_BLOCK_THRESHOLD {
        match block {
            Block::Sparse(s) => BandedLu::factor(s)?.solve(b),
            Block::Dense(d) => BandedLu::factor(&CsrMatrix::from_dense(d))?.solve(b),
        }
    } else {
        match block {
            Block::Dense(d) => DenseLu::factor(d)?.solve(b),
            Block::Sparse(s) => DenseLu::factor(&s.to_dense())?.solve(b),
        }
    }
}
