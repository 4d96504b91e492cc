use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use jacobi_split::fabric::{spawn_world, spawn_world_with_stats, Tag};
use jacobi_split::mmio::{read_matrix_market_from, write_matrix_market_to};
use jacobi_split::partition::{
    band_row_split, build_dependency_lists, check_interface_alignment, check_partial_sums, greedy_graph_growing,
    substructures_from_element_parts, substructures_from_node_parts, symmetric_adjacency,
};
use jacobi_split::solver::{jacobi_substructuring, solve_bundle};
use jacobi_split::sparse::{sequential_jacobi, spmv};
use jacobi_split::testgen::{gen_laplace, hex_element_stiffness, Discretization, MeshSpec};
use jacobi_split::mmio::PartitionBundle;
use jacobi_split::{CsrMatrix, JacobiConfig, Variant};

fn matrix_strategy(max_n: usize) -> impl Strategy<Value = CsrMatrix> {
    (1..=max_n, 1..=max_n).prop_flat_map(|(r, c)| {
        prop::collection::vec((0..r, 0..c, -1e3..1e3f64), 0..=r * c).prop_map(move |t| {
            CsrMatrix::from_triplets(r, c, t).unwrap()
        })
    })
}

/// Symmetric, strictly diagonally dominant, with a random right-hand side.
fn system_strategy(max_n: usize) -> impl Strategy<Value = (CsrMatrix, Vec<f64>)> {
    (2..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec((0..n, 0..n, -1.0..0.0f64), 0..3 * n),
            prop::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(move |(off, b)| {
                let mut triplets = Vec::new();
                let mut row_sum = vec![0.0; n];
                for (i, j, v) in off.into_iter().filter(|(i, j, _)| i != j) {
                    triplets.push((i, j, v));
                    triplets.push((j, i, v));
                    row_sum[i] -= v;
                    row_sum[j] -= v;
                }
                triplets.extend((0..n).map(|i| (i, i, row_sum[i] + 1.0)));
                (CsrMatrix::from_triplets(n, n, triplets).unwrap(), b)
            })
    })
}

fn inf_residual(a: &CsrMatrix, b: &[f64], u: &[f64]) -> f64 {
    let q = spmv(a, u).unwrap();
    b.iter().zip(q).map(|(bi, qi)| (bi - qi).abs()).fold(0.0, f64::max)
}

/// Connected parts of a random element assignment, renumbered densely.
fn compact(parts: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &p in parts {
        let next = ids.len();
        ids.entry(p).or_insert(next);
    }
    (parts.iter().map(|p| ids[p]).collect(), ids.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matrix_market_round_trip(a in matrix_strategy(20)) {
        let mut buf = Vec::new();
        write_matrix_market_to(&a, &mut buf).unwrap();
        prop_assert_eq!(read_matrix_market_from(&buf[..]).unwrap(), a);
    }

    #[test]
    fn symmetric_file_expands_to_both_triangles(a in matrix_strategy(12)) {
        let n = a.n_rows();
        let mut text = format!("%%MatrixMarket matrix coordinate real symmetric\n{n} {n} ");
        let lower: Vec<_> = a.triplets().filter(|&(i, j, _)| i < n && j <= i).collect();
        text += &format!("{}\n", lower.len());
        for (i, j, v) in &lower {
            text += &format!("{} {} {:.17e}\n", i + 1, j + 1, v);
        }
        let full = read_matrix_market_from(text.as_bytes()).unwrap();
        prop_assert_eq!(&full, &full.transpose());
        for (i, j, v) in lower {
            prop_assert_eq!(full.get(i, j), Some(v));
            prop_assert_eq!(full.get(j, i), Some(v));
        }
    }

    #[test]
    fn dependency_lists_mirror_and_are_minimal((a, b) in system_strategy(20), p in 1usize..6) {
        let p = p.min(a.n_rows());
        let parts = band_row_split(&a, &b, p).unwrap();
        let deps = build_dependency_lists(&parts);
        for (r, part) in parts.iter().enumerate() {
            // brute force: every off-band column of a band nonzero, grouped by owner
            let mut need: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
            for (_, j, _) in part.local_matrix.triplets() {
                if !part.range().contains(&j) {
                    let owner = parts.iter().position(|q| q.range().contains(&j)).unwrap();
                    need.entry(owner).or_default().insert(j);
                }
            }
            for q in 0..p {
                let recv: Vec<usize> = deps[r].neighbor(q).map(|nb| nb.recv.clone()).unwrap_or_default();
                let want: Vec<usize> = need.get(&q).map(|s| s.iter().copied().collect()).unwrap_or_default();
                prop_assert_eq!(&recv, &want);
                let mirrored: Vec<usize> = deps[q].neighbor(r).map(|nb| nb.send.clone()).unwrap_or_default();
                prop_assert_eq!(recv, mirrored);
            }
        }
    }

    #[test]
    fn element_split_partial_sums_reassemble(assign in prop::collection::vec(0usize..5, 27)) {
        let sys = gen_laplace(MeshSpec::new(4, Discretization::HexFem)).unwrap();
        let conn = sys.elements.unwrap();
        let (parts, p) = compact(&assign);
        let subs = substructures_from_element_parts(&sys.matrix, &sys.rhs, &conn, &parts, p).unwrap();
        prop_assert!(check_partial_sums(&sys.matrix, &sys.rhs, &subs).is_ok());
        prop_assert!(check_interface_alignment(&subs).is_ok());
    }

    #[test]
    fn node_split_partial_sums_reassemble((a, b) in system_strategy(16), assign in prop::collection::vec(0usize..4, 16)) {
        let n = a.n_rows();
        let (parts, p) = compact(&assign[..n]);
        let subs = substructures_from_node_parts(&a, &b, &parts, p).unwrap();
        prop_assert!(check_partial_sums(&a, &b, &subs).is_ok());
        prop_assert!(check_interface_alignment(&subs).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn allgather_matches_naive_gather(blocks in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 0..6), 1..=8)) {
        let p = blocks.len();
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        let expected: Vec<f64> = blocks.concat();
        let got = spawn_world(p, |ep| ep.left_right_allgather(&blocks[ep.rank()], &sizes).unwrap()).unwrap();
        for g in got {
            prop_assert_eq!(&g, &expected);
        }
    }

    #[test]
    fn message_counts_are_conserved(p in 2usize..7, sends in prop::collection::vec((0usize..6, 0usize..6, 1u32..4, 0usize..5), 0..30)) {
        let plan: Vec<(usize, usize, Tag, usize)> = sends
            .into_iter()
            .map(|(s, d, t, len)| (s % p, d % p, t, len))
            .filter(|(s, d, _, _)| s != d)
            .collect();
        let out = spawn_world_with_stats(p, |ep| {
            let r = ep.rank();
            for &(s, d, t, len) in &plan {
                if s == r {
                    ep.send(d, t, vec![s as f64; len]).unwrap();
                }
            }
            for &(s, d, t, len) in &plan {
                if d == r {
                    assert_eq!(ep.recv(s, t).unwrap(), vec![s as f64; len]);
                }
            }
        })
        .unwrap();
        let stats: Vec<_> = out.into_iter().map(|(_, s)| s).collect();
        for (s, st) in stats.iter().enumerate() {
            for (&(d, t), &count) in &st.sent {
                prop_assert_eq!(stats[d].received.get(&(s, t)).copied(), Some(count));
            }
        }
        let total_sent: u64 = stats.iter().flat_map(|s| s.sent.values()).sum();
        let total_recv: u64 = stats.iter().flat_map(|s| s.received.values()).sum();
        prop_assert_eq!(total_sent, total_recv);
        prop_assert_eq!(total_sent, plan.len() as u64);
        let bytes: u64 = plan.iter().map(|&(_, _, _, len)| 8 * len as u64).sum();
        prop_assert_eq!(stats.iter().map(|s| s.bytes_sent).sum::<u64>(), bytes);
    }

    #[test]
    fn band_row_variants_agree_bitwise((a, b) in system_strategy(24), p in 1usize..6) {
        let p = p.min(a.n_rows());
        let bundle = PartitionBundle::band_row(band_row_split(&a, &b, p).unwrap(), None);
        let cfg = JacobiConfig::default();
        let jb = solve_bundle(&bundle, Variant::BandRow, &cfg).unwrap();
        let jbo = solve_bundle(&bundle, Variant::BandRowOptimized, &cfg).unwrap();
        let (seq, rep) = sequential_jacobi(&a, &b, &cfg).unwrap();
        prop_assert_eq!(&jb.u, &jbo.u);
        prop_assert_eq!(&jb.u, &seq);
        prop_assert_eq!(jb.report.iterations, rep.iterations);
        prop_assert_eq!(jbo.report.iterations, rep.iterations);
    }

    #[test]
    fn shared_interface_values_are_identical((a, b) in system_strategy(20), p in 2usize..5) {
        let p = p.min(a.n_rows());
        let parts = greedy_graph_growing(&symmetric_adjacency(&a), p).unwrap();
        let subs = substructures_from_node_parts(&a, &b, &parts, p).unwrap();
        let cfg = JacobiConfig::default();
        let locals = spawn_world(p, |ep| jacobi_substructuring(&subs[ep.rank()], ep, &cfg).unwrap().0).unwrap();
        let mut seen: BTreeMap<usize, u64> = BTreeMap::new();
        for (s, u) in subs.iter().zip(&locals) {
            for (l, &g) in s.local_to_global.iter().enumerate() {
                let bits = u[l].to_bits();
                prop_assert_eq!(*seen.entry(g).or_insert(bits), bits);
            }
        }
    }

    #[test]
    fn converged_means_small_residual((a, b) in system_strategy(20), p in 1usize..5) {
        let p = p.min(a.n_rows());
        let cfg = JacobiConfig::default();
        let (u, rep) = sequential_jacobi(&a, &b, &cfg).unwrap();
        prop_assert!(rep.converged);
        prop_assert!(inf_residual(&a, &b, &u) <= cfg.epsilon);

        let parts = greedy_graph_growing(&symmetric_adjacency(&a), p).unwrap();
        let bundle = PartitionBundle::substructuring(substructures_from_node_parts(&a, &b, &parts, p).unwrap());
        let sol = solve_bundle(&bundle, Variant::Substructuring, &cfg).unwrap();
        prop_assert!(sol.report.converged);
        // assembled rows may round differently from the sequential product
        let scale = a.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(inf_residual(&a, &b, &sol.u) <= cfg.epsilon + 1e-13 * scale);
    }
}

fn corner(a: usize) -> [usize; 3] {
    [a & 1, (a >> 1) & 1, (a >> 2) & 1]
}

#[test]
fn element_stiffness_matches_closed_form() {
    // unit cube: h/3 on the diagonal, 0 along edges, -h/12 across faces and the body
    for h in [1.0, 0.25, 1.0 / 16.0] {
        let k = hex_element_stiffness(h);
        for a in 0..8 {
            for b in 0..8 {
                let differ = (0..3).filter(|&d| corner(a)[d] != corner(b)[d]).count();
                let exact = h * [1.0 / 3.0, 0.0, -1.0 / 12.0, -1.0 / 12.0][differ];
                assert!((k[a * 8 + b] - exact).abs() <= 1e-15, "h {h}, ({a}, {b})");
            }
        }
    }
}

#[test]
fn hex_assembly_matches_brute_force() {
    for m in 3..=6 {
        let sys = gen_laplace(MeshSpec::new(m, Discretization::HexFem)).unwrap();
        let h = 1.0 / (m - 1) as f64;
        let ke = hex_element_stiffness(h);
        let k = m - 2;
        let n = k * k * k;
        let index = |x: usize, y: usize, z: usize| {
            (x >= 1 && y >= 1 && z >= 1 && x < m - 1 && y < m - 1 && z < m - 1)
                .then(|| (x - 1) + k * (y - 1) + k * k * (z - 1))
        };
        let mut dense = vec![0.0; n * n];
        for ez in 0..m - 1 {
            for ey in 0..m - 1 {
                for ex in 0..m - 1 {
                    let node = |a: usize| {
                        let c = corner(a);
                        index(ex + c[0], ey + c[1], ez + c[2])
                    };
                    for a in 0..8 {
                        for b in 0..8 {
                            if let (Some(i), Some(j)) = (node(a), node(b)) {
                                dense[i * n + j] += ke[a * 8 + b];
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(sys.matrix.to_dense(), dense, "m = {m}");
        assert!(sys.matrix.max_row_nnz() <= 27);
        assert_eq!(sys.matrix, sys.matrix.transpose());
    }
}

#[test]
fn generated_systems_have_convergent_jacobi() {
    for disc in [Discretization::Fd7, Discretization::HexFem] {
        for m in 3..=7 {
            let a = gen_laplace(MeshSpec::new(m, disc)).unwrap().matrix;
            assert_eq!(a, a.transpose());
            let n = a.n_rows();
            let d = a.to_dense();
            // T = I - D^-1 A is similar to I - D^-1/2 A D^-1/2
            let s = DMatrix::from_fn(n, n, |i, j| d[i * n + j] / (d[i * n + i] * d[j * n + j]).sqrt());
            let rho = SymmetricEigen::new(s)
                .eigenvalues
                .iter()
                .map(|l| (1.0 - l).abs())
                .fold(0.0, f64::max);
            assert!(rho < 1.0, "{disc:?} m = {m}: rho = {rho}");
            let fd_max = if disc == Discretization::Fd7 { 7 } else { 27 };
            assert!(a.max_row_nnz() <= fd_max);
        }
    }
}
