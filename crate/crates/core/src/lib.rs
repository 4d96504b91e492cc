//! Distributed synchronous Jacobi for sparse linear systems.
//!
//! Three ways of splitting a system over ranks are provided: contiguous
//! row bands with a full-vector gather per iteration, row bands exchanging
//! only the entries their sparsity pattern needs, and non-overlapping
//! substructures with interface assembly. Ranks run as threads talking over
//! an in-process message-passing fabric.

pub mod bench;
pub mod fabric;
pub mod mmio;
pub mod partition;
pub mod report;
pub mod solver;
pub mod sparse;
pub mod testgen;

pub use report::{SolveReport, Variant};
pub use sparse::{CsrMatrix, JacobiConfig};
