use std::time::Instant;

use super::{inverse, run_jacobi, LocalProduct, SolverError};
use crate::fabric::{RankEndpoint, Tag};
use crate::partition::{BandRowPartition, DependencyLists};
use crate::report::{SolveReport, Variant};
use crate::sparse::{spmv_into, JacobiConfig, SparseError};

const TAG_GHOST: Tag = 1;

fn band_inverse_diagonal(part: &BandRowPartition) -> Result<Vec<f64>, SolverError> {
    part.range()
        .enumerate()
        .map(|(i, g)| inverse(part.local_matrix.get(i, g).unwrap_or(0.0), g))
        .collect()
}

fn local_start(part: &BandRowPartition, cfg: &JacobiConfig) -> Result<Vec<f64>, SolverError> {
    cfg.validate()?;
    if part.local_rhs.len() != part.n_local() {
        return Err(SparseError::DimensionMismatch {
            expected: part.n_local(),
            found: part.local_rhs.len(),
        }
        .into());
    }
    Ok(cfg.initial_iterate(part.n_local())?)
}

struct Gathered<'a> {
    part: &'a BandRowPartition,
    block_sizes: Vec<usize>,
}

impl LocalProduct for Gathered<'_> {
    fn product(&mut self, ep: &mut RankEndpoint, u: &[f64], q: &mut [f64]) -> Result<(), SolverError> {
        let full = ep.left_right_allgather(u, &self.block_sizes)?;
        spmv_into(&self.part.local_matrix, &full, q)?;
        Ok(())
    }
}

/// Naive band-row Jacobi: every iteration gathers the whole iterate on every
/// rank, then multiplies the local band by it.
///
/// `cfg.initial_guess`, when given, is this rank's slice of the start vector.
pub fn jacobi_bandrow_naive(
    part: &BandRowPartition,
    ep: &mut RankEndpoint,
    cfg: &JacobiConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let start = Instant::now();
    let u = local_start(part, cfg)?;
    let d_inv = band_inverse_diagonal(part)?;
    let mut sizes = vec![0.0; ep.world_size()];
    sizes[ep.rank()] = part.n_local() as f64;
    let block_sizes: Vec<usize> = ep
        .all_reduce_sum(&sizes)?
        .into_iter()
        .map(|s| s as usize)
        .collect();
    let mut product = Gathered { part, block_sizes };
    run_jacobi(ep, Variant::BandRow, &mut product, &part.local_rhs, &d_inv, None, u, cfg, start)
}

/// The band renumbered over `[owned entries, ghost slots]`, keeping each
/// row's entries in their original order so the products match the naive
/// variant bit for bit.
struct GhostOperator<'a> {
    row_ptr: &'a [usize],
    cols: Vec<usize>,
    vals: &'a [f64],
    deps: &'a DependencyLists,
    send_offsets: Vec<Vec<usize>>,
    recv_slots: Vec<Vec<usize>>,
    order: Vec<usize>,
    x: Vec<f64>,
}

impl<'a> GhostOperator<'a> {
    fn new(part: &'a BandRowPartition, deps: &'a DependencyLists, ep: &RankEndpoint) -> Result<Self, SolverError> {
        let n_local = part.n_local();
        let miss = |g: usize| SolverError::Unsupported(format!("rank {}: column {g} has no ghost slot", part.rank));
        let cols = part
            .local_matrix
            .col_idx()
            .iter()
            .map(|&g| {
                if part.range().contains(&g) {
                    Ok(g - part.row_begin)
                } else {
                    deps.ghost_map.get(&g).map(|s| n_local + s).ok_or_else(|| miss(g))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let send_offsets = deps
            .neighbors
            .iter()
            .map(|nb| {
                nb.send
                    .iter()
                    .map(|&g| {
                        if part.range().contains(&g) {
                            Ok(g - part.row_begin)
                        } else {
                            Err(SolverError::Unsupported(format!(
                                "rank {}: asked to send unowned entry {g}",
                                part.rank
                            )))
                        }
                    })
                    .collect()
            })
            .collect::<Result<Vec<Vec<usize>>, _>>()?;
        let recv_slots = deps
            .neighbors
            .iter()
            .map(|nb| nb.recv.iter().map(|g| deps.ghost_map.get(g).copied().ok_or_else(|| miss(*g))).collect())
            .collect::<Result<Vec<Vec<usize>>, _>>()?;
        // neighbour index for each partner in left-right order
        let order = ep
            .left_right_order()
            .into_iter()
            .filter_map(|q| deps.neighbors.iter().position(|nb| nb.rank == q))
            .collect();
        Ok(GhostOperator {
            row_ptr: part.local_matrix.row_ptr(),
            cols,
            vals: part.local_matrix.values(),
            deps,
            send_offsets,
            recv_slots,
            order,
            x: vec![0.0; n_local + deps.ghost_count()],
        })
    }
}

impl LocalProduct for GhostOperator<'_> {
    fn product(&mut self, ep: &mut RankEndpoint, u: &[f64], q: &mut [f64]) -> Result<(), SolverError> {
        let n_local = u.len();
        self.x[..n_local].copy_from_slice(u);
        for &k in &self.order {
            let nb = &self.deps.neighbors[k];
            let out: Vec<f64> = self.send_offsets[k].iter().map(|&l| u[l]).collect();
            let got = ep.exchange(nb.rank, TAG_GHOST, out, nb.recv.len())?;
            for (&slot, v) in self.recv_slots[k].iter().zip(got) {
                self.x[n_local + slot] = v;
            }
        }
        for (i, qi) in q.iter_mut().enumerate() {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            *qi = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .fold(0.0, |acc, (&j, &v)| acc + v * self.x[j]);
        }
        Ok(())
    }
}

/// Sparsity-pattern band-row Jacobi: each iteration exchanges only the
/// entries listed in the dependency lists, pair by pair in left-right order.
pub fn jacobi_bandrow_sparsity(
    part: &BandRowPartition,
    deps: &DependencyLists,
    ep: &mut RankEndpoint,
    cfg: &JacobiConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let start = Instant::now();
    let u = local_start(part, cfg)?;
    let d_inv = band_inverse_diagonal(part)?;
    if deps.rank != part.rank {
        return Err(SolverError::RankMismatch(format!(
            "dependency lists of rank {} given to rank {}",
            deps.rank, part.rank
        )));
    }
    let mut product = GhostOperator::new(part, deps, ep)?;
    run_jacobi(
        ep,
        Variant::BandRowOptimized,
        &mut product,
        &part.local_rhs,
        &d_inv,
        None,
        u,
        cfg,
        start,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::spawn_world_with_stats;
    use crate::partition::{band_row_split, build_dependency_lists};
    use crate::sparse::CsrMatrix;
    use crate::testgen::tridiagonal;

    #[test]
    fn aligned_block_diagonal_sends_no_payload() {
        let t = tridiagonal(3);
        let triplets: Vec<_> = (0..2)
            .flat_map(|k| t.triplets().map(move |(i, j, v)| (i + 3 * k, j + 3 * k, v)))
            .collect();
        let a = CsrMatrix::from_triplets(6, 6, triplets).unwrap();
        let parts = band_row_split(&a, &[1.0; 6], 2).unwrap();
        let deps = build_dependency_lists(&parts);
        let out = spawn_world_with_stats(2, |ep| {
            let r = ep.rank();
            jacobi_bandrow_sparsity(&parts[r], &deps[r], ep, &JacobiConfig::default()).unwrap()
        })
        .unwrap();
        for ((u, rep), stats) in out {
            assert!(rep.converged);
            assert_eq!(stats.bytes_sent, 0);
            for (x, y) in u.iter().zip([1.5, 2.0, 1.5]) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }
}
