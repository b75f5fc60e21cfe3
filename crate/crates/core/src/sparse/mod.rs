//! Sparse matrices over symbolic scalars, mesh operators and Matrix Market
//! input.

mod matrix;
mod mesh;
mod mtx;

pub use matrix::{from_triplets, sp_add, sp_mul, sp_scale, sp_transpose, Pattern, SymbolicSparseMatrix};
pub use mesh::{
    build_operator, cotan_face, cotan_triplets, grid_pattern, random_pattern, CotanTriplets, MeshLaplacianSpec,
    PatternBuilder, TriGrid, Weighting,
};
pub use mtx::{parse_mtx, parse_mtx_with_limits, write_pattern_mtx, MtxField, MtxLimits, MtxMatrix, MtxSymmetry};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) outside {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("grid must be at least 2x2, got {w}x{h}")]
    DegenerateMesh { w: usize, h: usize },
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("matrix market line {line}: {msg}")]
    Mtx { line: usize, msg: String },
}
