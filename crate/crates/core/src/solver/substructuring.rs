use std::time::Instant;

use super::{inverse, run_jacobi, LocalProduct, SolverError};
use crate::fabric::{RankEndpoint, Tag};
use crate::partition::Substructure;
use crate::report::{SolveReport, Variant};
use crate::sparse::{spmv_into, JacobiConfig, SparseError};

const TAG_INTERFACE: Tag = 2;

/// Sums per-subdomain partial values at interface nodes.
///
/// Each rank sends its partial values to every neighbour sharing the node,
/// then adds up all partials in ascending rank order. Every sharer therefore
/// performs the same additions in the same order and ends up with the same
/// bits.
#[derive(Debug, Clone)]
pub struct InterfaceAssembler {
    interior_count: usize,
    /// `offsets[k]..offsets[k + 1]` are the contribution slots of interface node `k`.
    offsets: Vec<usize>,
    own_slot: Vec<usize>,
    /// (neighbour rank, local indices, contribution slots), in left-right order.
    neighbors: Vec<(usize, Vec<usize>, Vec<usize>)>,
    contrib: Vec<f64>,
}

impl InterfaceAssembler {
    pub fn new(sub: &Substructure, partner_order: &[usize]) -> Result<Self, SolverError> {
        let nic = sub.interface_count;
        let mut sharers: Vec<Vec<usize>> = vec![vec![sub.rank]; nic];
        for d in &sub.interfaces {
            for &l in &d.local_indices {
                if l < sub.interior_count || l >= sub.n_local() {
                    return Err(SolverError::Unsupported(format!(
                        "rank {}: interface list for {} names non-interface index {l}",
                        sub.rank, d.neighbor
                    )));
                }
                sharers[l - sub.interior_count].push(d.neighbor);
            }
        }
        for s in &mut sharers {
            s.sort_unstable();
        }
        let mut offsets = vec![0];
        for s in &sharers {
            offsets.push(offsets.last().unwrap() + s.len());
        }
        let slot = |k: usize, rank: usize| offsets[k] + sharers[k].binary_search(&rank).unwrap();
        let own_slot = (0..nic).map(|k| slot(k, sub.rank)).collect();
        let neighbors = partner_order
            .iter()
            .filter_map(|&q| sub.interfaces.iter().find(|d| d.neighbor == q))
            .map(|d| {
                let slots = d
                    .local_indices
                    .iter()
                    .map(|&l| slot(l - sub.interior_count, d.neighbor))
                    .collect();
                (d.neighbor, d.local_indices.clone(), slots)
            })
            .collect();
        Ok(InterfaceAssembler {
            interior_count: sub.interior_count,
            contrib: vec![0.0; *offsets.last().unwrap()],
            offsets,
            own_slot,
            neighbors,
        })
    }

    /// Replaces the interface entries of `y` by their sums over all sharers.
    pub fn assemble(&mut self, ep: &mut RankEndpoint, y: &mut [f64]) -> Result<(), SolverError> {
        for (q, list, slots) in &self.neighbors {
            let out: Vec<f64> = list.iter().map(|&l| y[l]).collect();
            let got = ep.exchange(*q, TAG_INTERFACE, out, list.len())?;
            for (&s, v) in slots.iter().zip(got) {
                self.contrib[s] = v;
            }
        }
        for (k, &s) in self.own_slot.iter().enumerate() {
            self.contrib[s] = y[self.interior_count + k];
        }
        for k in 0..self.own_slot.len() {
            let parts = &self.contrib[self.offsets[k]..self.offsets[k + 1]];
            y[self.interior_count + k] = parts[1..].iter().fold(parts[0], |acc, &v| acc + v);
        }
        Ok(())
    }
}

struct Assembled<'a> {
    sub: &'a Substructure,
    assembler: InterfaceAssembler,
}

impl LocalProduct for Assembled<'_> {
    fn product(&mut self, ep: &mut RankEndpoint, u: &[f64], q: &mut [f64]) -> Result<(), SolverError> {
        spmv_into(&self.sub.local_matrix, u, q)?;
        self.assembler.assemble(ep, q)
    }
}

fn check_sizes(sub: &Substructure) -> Result<(), SolverError> {
    let n = sub.n_local();
    for found in [sub.local_matrix.n_rows(), sub.local_matrix.n_cols(), sub.local_rhs.len(), sub.local_to_global.len()] {
        if found != n {
            return Err(SparseError::DimensionMismatch { expected: n, found }.into());
        }
    }
    Ok(())
}

/// Distributed product `A x` over a substructure: local product, then
/// interface assembly. Collective over all ranks.
pub fn substructure_spmv(sub: &Substructure, ep: &mut RankEndpoint, x_local: &[f64]) -> Result<Vec<f64>, SolverError> {
    check_sizes(sub)?;
    let mut product = Assembled {
        sub,
        assembler: InterfaceAssembler::new(sub, &ep.left_right_order())?,
    };
    let mut y = vec![0.0; sub.n_local()];
    product.product(ep, x_local, &mut y)?;
    Ok(y)
}

/// Substructuring Jacobi.
///
/// The interface diagonal and right-hand side are assembled once up front,
/// so the update at an interface node uses the global row. Interface
/// iterates stay identical on all sharers since they apply the same update
/// to the same assembled values.
pub fn jacobi_substructuring(
    sub: &Substructure,
    ep: &mut RankEndpoint,
    cfg: &JacobiConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let start = Instant::now();
    cfg.validate()?;
    check_sizes(sub)?;
    let u = cfg.initial_iterate(sub.n_local())?;
    let mut assembler = InterfaceAssembler::new(sub, &ep.left_right_order())?;

    let mut diag: Vec<f64> = (0..sub.n_local())
        .map(|l| sub.local_matrix.get(l, l).unwrap_or(0.0))
        .collect();
    assembler.assemble(ep, &mut diag)?;
    let d_inv = diag
        .iter()
        .zip(&sub.local_to_global)
        .map(|(&d, &g)| inverse(d, g))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut b = sub.local_rhs.clone();
    assembler.assemble(ep, &mut b)?;

    let owned: Vec<bool> = (0..sub.n_local()).map(|l| sub.owns(l)).collect();
    let mut product = Assembled { sub, assembler };
    run_jacobi(
        ep,
        Variant::Substructuring,
        &mut product,
        &b,
        &d_inv,
        Some(&owned),
        u,
        cfg,
        start,
    )
}
