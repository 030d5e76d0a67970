//! Hierarchical matrices: cluster and block trees, adaptive cross
//! approximation, H-matrix storage and products, H-LU preconditioning and
//! Krylov solvers.

mod aca;
mod block;
mod cluster;
mod generator;
mod lowrank;
mod lu;
mod matrix;
mod solvers;
mod stats;

use thiserror::Error;

pub use aca::{aca_full, aca_partial, AcaReport};
pub use block::{build_block_tree, is_admissible, Admissibility, BlockKind, BlockNode, BlockTree};
pub use cluster::{build_cluster_tree, ClusterNode, ClusterTree};
pub use generator::{CountingGenerator, DenseGenerator, EntryGenerator, FnGenerator};
pub use lowrank::{svd_recompress, truncation_rank, LowRank};
pub use lu::{default_lu_tolerance, h_lu, HLu};
pub use matrix::{assemble, AcaMode, AssemblyOptions, HBlock, HMatrix, SubBlocks};
pub use solvers::{gmres, pcg, IdentityPreconditioner, LinearOperator, Preconditioner, SolveReport, Solution, SolverError};
pub use stats::{CompressionStats, RankSummary, Timings};

#[derive(Debug, Error)]
pub enum HError {
    #[error("cannot build a cluster tree from an empty point set")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ACA reached rank {k_max} without converging on block at ({row}, {col}) of size {rows}x{cols}")]
    AcaNotConverged {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
        k_max: usize,
    },
    #[error("near-zero pivot {value:e} at permuted index {index}")]
    NearZeroPivot { index: usize, value: f64 },
    #[error("diagonal block stored in low-rank form cannot be factored")]
    LowRankDiagonal,
}
