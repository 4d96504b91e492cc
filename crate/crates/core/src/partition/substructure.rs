//! Non-overlapping substructuring.
//!
//! Every global node belongs to one or more subdomains. Nodes seen by a
//! single subdomain are interior; the rest are interface nodes, shared by all
//! subdomains listed in their sharer set. Each subdomain stores its rows over
//! a local numbering (interior nodes first, then interface nodes, both in
//! ascending global order). Interface coefficients are split so that, for
//! every global entry, the per-subdomain partial copies sum to it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{greedy_graph_growing, ElementConnectivity, PartitionError};
use crate::sparse::CsrMatrix;

/// Interface shared with one neighbouring subdomain.
///
/// `local_indices` lists this subdomain's local indices of the shared nodes
/// in ascending global order, so the neighbour's list is aligned with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceDescriptor {
    pub neighbor: usize,
    pub local_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Substructure {
    pub rank: usize,
    pub global_n: usize,
    pub local_matrix: CsrMatrix,
    /// Right-hand side with interface entries pre-split among sharers.
    pub local_rhs: Vec<f64>,
    pub local_to_global: Vec<usize>,
    pub interior_count: usize,
    pub interface_count: usize,
    pub interfaces: Vec<InterfaceDescriptor>,
    /// Owning rank of each interface node (indexed from `interior_count`).
    pub interface_owner: Vec<usize>,
}

impl Substructure {
    pub fn n_local(&self) -> usize {
        self.interior_count + self.interface_count
    }

    /// True when this subdomain is responsible for `local` in reductions.
    pub fn owns(&self, local: usize) -> bool {
        local < self.interior_count || self.interface_owner[local - self.interior_count] == self.rank
    }

    pub fn is_interface(&self, local: usize) -> bool {
        local >= self.interior_count
    }
}

/// Splits a system into `p` substructures.
///
/// With element connectivity, elements are grouped by greedy graph growing on
/// the element graph and each subdomain is assembled from its own elements.
/// Without it, nodes are grouped on the matrix graph and interface
/// coefficients are divided equally among the sharing subdomains.
pub fn substructure_split(
    a: &CsrMatrix,
    b: &[f64],
    p: usize,
    elements: Option<&ElementConnectivity>,
) -> Result<Vec<Substructure>, PartitionError> {
    check_system(a, b)?;
    match elements {
        Some(conn) => {
            conn.validate()?;
            let parts = greedy_graph_growing(&conn.element_adjacency(), p)?;
            substructures_from_element_parts(a, b, conn, &parts, p)
        }
        None => {
            let parts = greedy_graph_growing(&symmetric_adjacency(a), p)?;
            substructures_from_node_parts(a, b, &parts, p)
        }
    }
}

fn check_system(a: &CsrMatrix, b: &[f64]) -> Result<(), PartitionError> {
    if !a.is_square() {
        return Err(PartitionError::NotSquare);
    }
    if b.len() != a.n_rows() {
        return Err(PartitionError::DimensionMismatch {
            expected: a.n_rows(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Neighbours of each node in the pattern of `A + A^T`, without self loops.
pub fn symmetric_adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); a.n_rows()];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn single_substructure(a: &CsrMatrix, b: &[f64]) -> Vec<Substructure> {
    let n = a.n_rows();
    vec![Substructure {
        rank: 0,
        global_n: n,
        local_matrix: a.clone(),
        local_rhs: b.to_vec(),
        local_to_global: (0..n).collect(),
        interior_count: n,
        interface_count: 0,
        interfaces: Vec::new(),
        interface_owner: Vec::new(),
    }]
}

fn check_part_ids(parts: &[usize], p: usize, what: &str) -> Result<(), PartitionError> {
    if p == 0 {
        return Err(PartitionError::ZeroParts);
    }
    if let Some((v, &k)) = parts.iter().enumerate().find(|(_, &k)| k >= p) {
        return Err(PartitionError::InvalidAssignment(format!(
            "{what} {v} assigned to part {k}, expected < {p}"
        )));
    }
    Ok(())
}

/// Algebraic substructuring from an explicit node-to-part assignment.
///
/// A node coupled to a node of another part becomes an interface node shared
/// by its own part and the parts of all its neighbours.
pub fn substructures_from_node_parts(
    a: &CsrMatrix,
    b: &[f64],
    parts: &[usize],
    p: usize,
) -> Result<Vec<Substructure>, PartitionError> {
    check_system(a, b)?;
    let n = a.n_rows();
    if parts.len() != n {
        return Err(PartitionError::InvalidAssignment(format!(
            "{} part ids for {n} nodes",
            parts.len()
        )));
    }
    check_part_ids(parts, p, "node")?;
    if p == 1 {
        return Ok(single_substructure(a, b));
    }

    let adj = symmetric_adjacency(a);
    let sharers: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut s: Vec<usize> = std::iter::once(parts[i])
                .chain(adj[i].iter().map(|&j| parts[j]))
                .collect();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();

    let mut matrix_parts: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); p];
    for (i, j, v) in a.triplets() {
        if sharers[i].len() == 1 {
            matrix_parts[parts[i]].push((i, j, v));
        } else if sharers[j].len() == 1 {
            matrix_parts[parts[j]].push((i, j, v));
        } else {
            let common: Vec<usize> = sharers[i]
                .iter()
                .copied()
                .filter(|s| sharers[j].binary_search(s).is_ok())
                .collect();
            let share = v / common.len() as f64;
            for s in common {
                matrix_parts[s].push((i, j, share));
            }
        }
    }
    let mut rhs_parts: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    for (i, s) in sharers.iter().enumerate() {
        let share = b[i] / s.len() as f64;
        for &k in s {
            rhs_parts[k].push((i, share));
        }
    }
    build(n, p, &sharers, matrix_parts, rhs_parts)
}

/// Element-based substructuring from an explicit element-to-part assignment.
///
/// With element matrices available, each subdomain is assembled from its own
/// elements after checking that the full assembly reproduces `a`. Otherwise
/// each coefficient is split in proportion to the number of elements of each
/// subdomain that couple the two nodes, which is exact for uniform meshes.
pub fn substructures_from_element_parts(
    a: &CsrMatrix,
    b: &[f64],
    conn: &ElementConnectivity,
    element_parts: &[usize],
    p: usize,
) -> Result<Vec<Substructure>, PartitionError> {
    check_system(a, b)?;
    conn.validate()?;
    let n = a.n_rows();
    if conn.n_nodes != n {
        return Err(PartitionError::InvalidElements(format!(
            "connectivity has {} nodes, matrix has {n} rows",
            conn.n_nodes
        )));
    }
    if element_parts.len() != conn.elements.len() {
        return Err(PartitionError::InvalidAssignment(format!(
            "{} part ids for {} elements",
            element_parts.len(),
            conn.elements.len()
        )));
    }
    check_part_ids(element_parts, p, "element")?;
    if p > conn.elements.len() {
        return Err(PartitionError::TooManyParts {
            parts: p,
            available: conn.elements.len(),
        });
    }
    if p == 1 {
        check_element_coverage(a, conn)?;
        return Ok(single_substructure(a, b));
    }

    let mut sharers: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut node_counts: Vec<HashMap<usize, u32>> = vec![HashMap::new(); n];
    for (e, el) in conn.elements.iter().enumerate() {
        for &i in el.nodes.iter().flatten() {
            sharers[i].push(element_parts[e]);
            *node_counts[i].entry(element_parts[e]).or_default() += 1;
        }
    }
    for s in &mut sharers {
        s.sort_unstable();
        s.dedup();
    }

    let matrix_parts = match &conn.assembly {
        Some(asm) => {
            let (assembled, _) = conn.assemble()?;
            check_same_matrix(a, &assembled)?;
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); p];
            for (e, &k) in element_parts.iter().enumerate() {
                members[k].push(e);
            }
            members
                .into_iter()
                .map(|els| {
                    conn.element_triplets(&asm.element_matrix, els.into_iter())
                        .collect::<Vec<_>>()
                })
                .collect()
        }
        None => count_weighted_split(a, conn, element_parts, p)?,
    };

    let loads_match = conn.elements.iter().all(|e| e.load.is_some())
        && conn
            .assemble()
            .ok()
            .is_some_and(|(_, load)| close_vectors(&load, b));
    let mut rhs_parts: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    if loads_match {
        for (e, el) in conn.elements.iter().enumerate() {
            let load = el.load.as_ref().unwrap();
            for (k, node) in el.nodes.iter().enumerate() {
                if let Some(i) = *node {
                    if sharers[i].len() > 1 {
                        rhs_parts[element_parts[e]].push((i, load[k]));
                    }
                }
            }
        }
    }
    for i in 0..n {
        if sharers[i].len() == 1 {
            rhs_parts[sharers[i][0]].push((i, b[i]));
        } else if !loads_match {
            let total: u32 = node_counts[i].values().sum();
            for (&k, &c) in &node_counts[i] {
                rhs_parts[k].push((i, b[i] * (c as f64 / total as f64)));
            }
        }
    }
    build(n, p, &sharers, matrix_parts, rhs_parts)
}

fn close_vectors(x: &[f64], y: &[f64]) -> bool {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.len() == y.len() && x.iter().zip(y).all(|(u, v)| (u - v).abs() <= 1e-12 * scale)
}

fn check_same_matrix(a: &CsrMatrix, assembled: &CsrMatrix) -> Result<(), PartitionError> {
    if a.row_ptr() != assembled.row_ptr() || a.col_idx() != assembled.col_idx() {
        return Err(PartitionError::ElementsDoNotAssemble(
            "element assembly has a different sparsity pattern".into(),
        ));
    }
    for i in 0..a.n_rows() {
        let (_, va) = a.row(i);
        let (_, vb) = assembled.row(i);
        let scale = va.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if va.iter().zip(vb).any(|(x, y)| (x - y).abs() > 1e-12 * scale) {
            return Err(PartitionError::ElementsDoNotAssemble(format!(
                "row {i} differs from the element assembly"
            )));
        }
    }
    Ok(())
}

/// Element pair counts per subdomain: `(i, j) -> [(part, count)]`.
fn pair_counts(conn: &ElementConnectivity, element_parts: &[usize]) -> HashMap<(usize, usize), Vec<(usize, u32)>> {
    let mut counts: HashMap<(usize, usize), Vec<(usize, u32)>> = HashMap::new();
    for (e, el) in conn.elements.iter().enumerate() {
        let k = element_parts[e];
        for &i in el.nodes.iter().flatten() {
            for &j in el.nodes.iter().flatten() {
                let list = counts.entry((i, j)).or_default();
                match list.iter_mut().find(|(part, _)| *part == k) {
                    Some((_, c)) => *c += 1,
                    None => list.push((k, 1)),
                }
            }
        }
    }
    counts
}

fn check_element_coverage(a: &CsrMatrix, conn: &ElementConnectivity) -> Result<(), PartitionError> {
    let counts = pair_counts(conn, &vec![0; conn.elements.len()]);
    match a.triplets().find(|(i, j, _)| !counts.contains_key(&(*i, *j))) {
        Some((i, j, _)) => Err(PartitionError::ElementsDoNotAssemble(format!(
            "entry ({i}, {j}) is not coupled by any element"
        ))),
        None => Ok(()),
    }
}

fn count_weighted_split(
    a: &CsrMatrix,
    conn: &ElementConnectivity,
    element_parts: &[usize],
    p: usize,
) -> Result<Vec<Vec<(usize, usize, f64)>>, PartitionError> {
    let counts = pair_counts(conn, element_parts);
    let mut out: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); p];
    for (i, j, v) in a.triplets() {
        let list = counts.get(&(i, j)).ok_or_else(|| {
            PartitionError::ElementsDoNotAssemble(format!("entry ({i}, {j}) is not coupled by any element"))
        })?;
        let total: u32 = list.iter().map(|(_, c)| c).sum();
        let mut list = list.clone();
        list.sort_unstable();
        for (k, c) in list {
            out[k].push((i, j, v * (c as f64 / total as f64)));
        }
    }
    Ok(out)
}

/// Builds the local structures once the sharer sets and partial
/// contributions (in global indices) are known.
fn build(
    n: usize,
    p: usize,
    sharers: &[Vec<usize>],
    matrix_parts: Vec<Vec<(usize, usize, f64)>>,
    rhs_parts: Vec<Vec<(usize, f64)>>,
) -> Result<Vec<Substructure>, PartitionError> {
    let mut g2l = vec![usize::MAX; n];
    let mut out = Vec::with_capacity(p);
    for (s, (triplets, rhs)) in matrix_parts.into_iter().zip(rhs_parts).enumerate() {
        let interior: Vec<usize> = (0..n).filter(|&i| sharers[i] == [s]).collect();
        let interface: Vec<usize> = (0..n)
            .filter(|&i| sharers[i].len() > 1 && sharers[i].binary_search(&s).is_ok())
            .collect();
        let local_to_global: Vec<usize> = interior.iter().chain(&interface).copied().collect();
        for (l, &g) in local_to_global.iter().enumerate() {
            g2l[g] = l;
        }
        let n_local = local_to_global.len();
        let mut local_triplets = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            let (li, lj) = (g2l[i], g2l[j]);
            if li == usize::MAX || lj == usize::MAX {
                return Err(PartitionError::ElementsDoNotAssemble(format!(
                    "entry ({i}, {j}) assigned to subdomain {s} which does not hold both nodes"
                )));
            }
            local_triplets.push((li, lj, v));
        }
        let local_matrix = CsrMatrix::from_triplets(n_local, n_local, local_triplets)?;
        let mut local_rhs = vec![0.0; n_local];
        for (i, v) in rhs {
            local_rhs[g2l[i]] += v;
        }

        let interfaces = (0..p)
            .filter(|&q| q != s)
            .filter_map(|q| {
                let local_indices: Vec<usize> = interface
                    .iter()
                    .filter(|&&g| sharers[g].binary_search(&q).is_ok())
                    .map(|&g| g2l[g])
                    .collect();
                (!local_indices.is_empty()).then_some(InterfaceDescriptor {
                    neighbor: q,
                    local_indices,
                })
            })
            .collect();
        let interface_owner = interface.iter().map(|&g| sharers[g][0]).collect();

        for &g in &local_to_global {
            g2l[g] = usize::MAX;
        }
        out.push(Substructure {
            rank: s,
            global_n: n,
            local_matrix,
            local_rhs,
            local_to_global,
            interior_count: interior.len(),
            interface_count: interface.len(),
            interfaces,
            interface_owner,
        });
    }
    Ok(out)
}

/// Checks that partial copies of every coefficient and right-hand-side entry
/// sum to the global value, within `1e-12` of the row's largest magnitude.
pub fn check_partial_sums(a: &CsrMatrix, b: &[f64], subs: &[Substructure]) -> Result<(), PartitionError> {
    let mut sums: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rhs = vec![0.0; a.n_rows()];
    for sub in subs {
        for (li, lj, v) in sub.local_matrix.triplets() {
            *sums
                .entry((sub.local_to_global[li], sub.local_to_global[lj]))
                .or_default() += v;
        }
        for (l, &g) in sub.local_to_global.iter().enumerate() {
            rhs[g] += sub.local_rhs[l];
        }
    }
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (&j, &v) in cols.iter().zip(vals) {
            let s = sums.remove(&(i, j)).unwrap_or(0.0);
            if (s - v).abs() > 1e-12 * scale {
                return Err(PartitionError::PartialSumMismatch { row: i, col: j, expected: v, found: s });
            }
        }
    }
    if let Some((&(i, j), &v)) = sums.iter().find(|(_, v)| **v != 0.0) {
        return Err(PartitionError::PartialSumMismatch { row: i, col: j, expected: 0.0, found: v });
    }
    if !close_vectors(&rhs, b) {
        return Err(PartitionError::InvalidAssignment(
            "partial right-hand sides do not sum to the global vector".into(),
        ));
    }
    Ok(())
}

/// Checks that interface descriptors are pairwise symmetric and aligned.
pub fn check_interface_alignment(subs: &[Substructure]) -> Result<(), PartitionError> {
    for s in subs {
        for d in &s.interfaces {
            let other = subs
                .get(d.neighbor)
                .and_then(|q| q.interfaces.iter().find(|e| e.neighbor == s.rank))
                .ok_or_else(|| {
                    PartitionError::InterfaceMismatch(format!("{} lists {} but not vice versa", s.rank, d.neighbor))
                })?;
            let mine: Vec<usize> = d.local_indices.iter().map(|&l| s.local_to_global[l]).collect();
            let theirs: Vec<usize> = other
                .local_indices
                .iter()
                .map(|&l| subs[d.neighbor].local_to_global[l])
                .collect();
            if mine != theirs {
                return Err(PartitionError::InterfaceMismatch(format!(
                    "interface {}-{} lists differ",
                    s.rank, d.neighbor
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::linear_chain;
    use crate::testgen::{gen_laplace, tridiagonal, Discretization, MeshSpec};

    #[test]
    fn chain_split_at_middle_node() {
        let conn = linear_chain(4, false);
        let (a, b) = conn.assemble().unwrap();
        let subs = substructures_from_element_parts(&a, &b, &conn, &[0, 0, 1, 1], 2).unwrap();
        for sub in &subs {
            assert_eq!(sub.interface_count, 1);
            let l = sub.interior_count;
            assert_eq!(sub.local_to_global[l], 2);
            assert_eq!(sub.local_matrix.get(l, l), Some(1.0));
        }
        assert_eq!(subs[0].local_to_global, vec![0, 1, 2]);
        check_partial_sums(&a, &b, &subs).unwrap();
        check_interface_alignment(&subs).unwrap();

        // greedy growing on the element graph finds the same split
        let grown = substructure_split(&a, &b, 2, Some(&conn)).unwrap();
        assert_eq!(grown, subs);
    }

    #[test]
    fn single_part_is_whole_system() {
        let a = tridiagonal(5);
        let b = vec![1.0; 5];
        let subs = substructure_split(&a, &b, 1, None).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].local_matrix, a);
        assert_eq!(subs[0].interface_count, 0);
        let imported = substructures_from_node_parts(&a, &b, &[0; 5], 1).unwrap();
        assert_eq!(imported, subs);
    }

    #[test]
    fn algebraic_interface_is_coupled_pair() {
        let a = tridiagonal(5);
        let b = vec![1.0; 5];
        let subs = substructures_from_node_parts(&a, &b, &[0, 0, 0, 1, 1], 2).unwrap();
        let iface: Vec<usize> = subs[0].local_to_global[subs[0].interior_count..].to_vec();
        assert_eq!(iface, vec![2, 3]);
        assert_eq!(subs[1].local_to_global, vec![4, 2, 3]);
        // interface diagonal split evenly
        assert_eq!(subs[0].local_matrix.get(2, 2), Some(1.0));
        assert_eq!(subs[0].interface_owner, vec![0, 0]);
        check_partial_sums(&a, &b, &subs).unwrap();
        check_interface_alignment(&subs).unwrap();
    }

    #[test]
    fn hex_mesh_partial_sums_both_paths() {
        let sys = gen_laplace(MeshSpec::new(5, Discretization::HexFem)).unwrap();
        let conn = sys.elements.as_ref().unwrap();
        for p in [2, 3, 4] {
            let subs = substructure_split(&sys.matrix, &sys.rhs, p, Some(conn)).unwrap();
            check_partial_sums(&sys.matrix, &sys.rhs, &subs).unwrap();
            check_interface_alignment(&subs).unwrap();
            let mut covered = vec![0usize; sys.matrix.n_rows()];
            for s in &subs {
                for l in 0..s.n_local() {
                    if s.owns(l) {
                        covered[s.local_to_global[l]] += 1;
                    }
                }
            }
            assert!(covered.iter().all(|&c| c == 1));

            let bare = ElementConnectivity::from_nodes(
                conn.n_nodes,
                8,
                conn.elements.iter().map(|e| e.nodes.clone()).collect(),
            );
            let subs = substructure_split(&sys.matrix, &sys.rhs, p, Some(&bare)).unwrap();
            check_partial_sums(&sys.matrix, &sys.rhs, &subs).unwrap();

            let subs = substructure_split(&sys.matrix, &sys.rhs, p, None).unwrap();
            check_partial_sums(&sys.matrix, &sys.rhs, &subs).unwrap();
            check_interface_alignment(&subs).unwrap();
        }
    }

    #[test]
    fn mismatched_elements_rejected() {
        let conn = linear_chain(4, false);
        let a = tridiagonal(5);
        let err = substructure_split(&a, &[1.0; 5], 2, Some(&conn)).unwrap_err();
        assert!(matches!(err, PartitionError::ElementsDoNotAssemble(_)));
    }

    #[test]
    fn too_many_parts() {
        let conn = linear_chain(2, false);
        let (a, b) = conn.assemble().unwrap();
        assert!(matches!(
            substructure_split(&a, &b, 3, Some(&conn)),
            Err(PartitionError::TooManyParts { .. })
        ));
        assert!(substructures_from_node_parts(&a, &b, &[0, 5, 0], 2).is_err());
    }
}
