//! Splitting a global system across ranks.

mod bandrow;
mod elements;
mod greedy;
mod substructure;

use thiserror::Error;

use crate::sparse::SparseError;

pub use bandrow::{
    band_ranges, band_row_split, band_row_split_sizes, build_dependency_lists, recv_dependencies, BandRowPartition,
    DependencyLists, NeighborDependencies,
};
pub use elements::{linear_chain, Element, ElementAssembly, ElementConnectivity};
pub use greedy::{balanced_sizes, greedy_graph_growing};
pub use substructure::{
    check_interface_alignment, check_partial_sums, substructure_split, substructures_from_element_parts,
    substructures_from_node_parts, symmetric_adjacency, InterfaceDescriptor, Substructure,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("number of parts must be at least 1")]
    ZeroParts,
    #[error("cannot make {parts} parts out of {available} items")]
    TooManyParts { parts: usize, available: usize },
    #[error("matrix is not square")]
    NotSquare,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid element connectivity: {0}")]
    InvalidElements(String),
    #[error("elements do not assemble to the matrix: {0}")]
    ElementsDoNotAssemble(String),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("partial entries at ({row}, {col}) sum to {found}, expected {expected}")]
    PartialSumMismatch { row: usize, col: usize, expected: f64, found: f64 },
    #[error("interface mismatch: {0}")]
    InterfaceMismatch(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}
