use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::PartitionError;
use crate::sparse::CsrMatrix;

/// A contiguous band of rows held by one rank. The local matrix keeps the
/// global column space.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRowPartition {
    pub rank: usize,
    pub row_begin: usize,
    pub row_end: usize,
    pub local_matrix: CsrMatrix,
    pub local_rhs: Vec<f64>,
}

impl BandRowPartition {
    pub fn range(&self) -> Range<usize> {
        self.row_begin..self.row_end
    }

    pub fn n_local(&self) -> usize {
        self.row_end - self.row_begin
    }

    pub fn global_n(&self) -> usize {
        self.local_matrix.n_cols()
    }
}

/// Row ranges for `p` bands over `n` rows; the first `n % p` bands get one extra row.
pub fn band_ranges(n: usize, p: usize) -> Vec<Range<usize>> {
    let mut begin = 0;
    super::greedy::balanced_sizes(n, p)
        .into_iter()
        .map(|len| {
            let r = begin..begin + len;
            begin += len;
            r
        })
        .collect()
}

pub fn band_row_split(a: &CsrMatrix, b: &[f64], p: usize) -> Result<Vec<BandRowPartition>, PartitionError> {
    let n = a.n_rows();
    if p == 0 {
        return Err(PartitionError::ZeroParts);
    }
    if p > n {
        return Err(PartitionError::TooManyParts { parts: p, available: n });
    }
    band_row_split_sizes(a, b, &super::greedy::balanced_sizes(n, p))
}

/// Band-row split with explicit band heights (which must sum to `n`, each >= 1).
pub fn band_row_split_sizes(
    a: &CsrMatrix,
    b: &[f64],
    sizes: &[usize],
) -> Result<Vec<BandRowPartition>, PartitionError> {
    let n = a.n_rows();
    if !a.is_square() {
        return Err(PartitionError::NotSquare);
    }
    if b.len() != n {
        return Err(PartitionError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if sizes.is_empty() {
        return Err(PartitionError::ZeroParts);
    }
    if sizes.iter().sum::<usize>() != n || sizes.contains(&0) {
        return Err(PartitionError::InvalidAssignment(format!(
            "band sizes {sizes:?} do not tile {n} rows"
        )));
    }
    let mut begin = 0;
    let ranges: Vec<Range<usize>> = sizes
        .iter()
        .map(|&len| {
            begin += len;
            begin - len..begin
        })
        .collect();
    Ok(ranges
        .into_iter()
        .enumerate()
        .map(|(rank, r)| BandRowPartition {
            rank,
            row_begin: r.start,
            row_end: r.end,
            local_matrix: a.row_band(r.start, r.end),
            local_rhs: b[r.clone()].to_vec(),
        })
        .collect())
}

/// Send and receive lists between one rank and one neighbour, in global indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborDependencies {
    pub rank: usize,
    /// Owned entries the neighbour needs, ascending.
    pub send: Vec<usize>,
    /// Neighbour-owned entries this rank needs, ascending.
    pub recv: Vec<usize>,
}

/// Sparsity-pattern exchange plan of one rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyLists {
    pub rank: usize,
    /// Neighbours with a non-empty send or receive list, ascending by rank.
    pub neighbors: Vec<NeighborDependencies>,
    /// Global index of every received entry -> its slot in the ghost buffer.
    pub ghost_map: BTreeMap<usize, usize>,
}

impl DependencyLists {
    pub fn neighbor(&self, rank: usize) -> Option<&NeighborDependencies> {
        self.neighbors.iter().find(|n| n.rank == rank)
    }

    pub fn ghost_count(&self) -> usize {
        self.ghost_map.len()
    }
}

fn owner_of(ranges: &[Range<usize>], col: usize) -> usize {
    ranges.partition_point(|r| r.end <= col)
}

/// Entries each other rank must provide for `part`'s local product:
/// the distinct columns of its nonzeros that fall in that rank's range.
///
/// Entries are not pruned by value: the iterate changes every iteration, so
/// a currently-zero entry may not stay zero.
pub fn recv_dependencies(part: &BandRowPartition, ranges: &[Range<usize>]) -> BTreeMap<usize, Vec<usize>> {
    let mut cols: Vec<usize> = part
        .local_matrix
        .col_idx()
        .iter()
        .copied()
        .filter(|c| !part.range().contains(c))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in cols {
        out.entry(owner_of(ranges, c)).or_default().push(c);
    }
    out
}

/// Builds every rank's dependency lists. Send lists are the mirror of the
/// neighbours' receive lists.
pub fn build_dependency_lists(partitions: &[BandRowPartition]) -> Vec<DependencyLists> {
    let ranges: Vec<Range<usize>> = partitions.iter().map(BandRowPartition::range).collect();
    let recvs: Vec<BTreeMap<usize, Vec<usize>>> =
        partitions.iter().map(|p| recv_dependencies(p, &ranges)).collect();

    partitions
        .iter()
        .map(|part| {
            let me = part.rank;
            let mut neighbors = Vec::new();
            for q in 0..partitions.len() {
                if q == me {
                    continue;
                }
                let recv = recvs[me].get(&q).cloned().unwrap_or_default();
                let send = recvs[q].get(&me).cloned().unwrap_or_default();
                if !recv.is_empty() || !send.is_empty() {
                    neighbors.push(NeighborDependencies { rank: q, send, recv });
                }
            }
            let ghost_map = neighbors
                .iter()
                .flat_map(|n| n.recv.iter().copied())
                .enumerate()
                .map(|(slot, g)| (g, slot))
                .collect();
            DependencyLists {
                rank: me,
                neighbors,
                ghost_map,
            }
        })
        .collect()
}
