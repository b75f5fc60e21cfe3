//! Sparsity-specific code optimizer.
//!
//! Programs over sparse matrices are traced with a symbolic scalar type into a
//! hash-consed expression DAG. The DAG is decomposed into shared
//! intermediates, grouped into structurally equivalent kernels, simplified, and
//! lowered to an [`codegen::ExecutionPlan`] that can be interpreted or emitted
//! as C source.

pub mod autodiff;
pub mod codegen;
pub mod decompose;
pub mod expr;
pub mod group;
pub mod pipeline;
pub mod programs;
pub mod simplify;
pub mod sparse;
pub mod template;
pub mod trace;
