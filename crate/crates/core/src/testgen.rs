//! System generators: 3D Laplace on the unit cube and small crafted matrices.
//!
//! Laplace systems are `-Δu = cos(x + y)` on `[0,1]^3` with homogeneous
//! Dirichlet conditions. Boundary nodes are eliminated, so an `m^3` grid
//! yields `(m-2)^3` unknowns. Nodes are numbered lexicographically, x fastest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::{Element, ElementAssembly, ElementConnectivity};
use crate::sparse::{spmv, CsrMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("mesh needs at least 3 nodes per axis, got {0}")]
    TooSmall(usize),
    #[error("unknown crafted matrix '{0}'")]
    UnknownName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// 7-point finite-difference stencil.
    Fd7,
    /// Trilinear hexahedral finite elements.
    HexFem,
}

impl std::str::FromStr for Discretization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fd7" => Ok(Discretization::Fd7),
            "hex-fem" => Ok(Discretization::HexFem),
            other => Err(format!("unknown discretization '{other}' (fd7 or hex-fem)")),
        }
    }
}

/// Uniform `m x m x m` grid on the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub m: usize,
    pub discretization: Discretization,
}

impl MeshSpec {
    pub fn new(m: usize, discretization: Discretization) -> Self {
        MeshSpec { m, discretization }
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.m as f64 - 1.0)
    }

    pub fn interior_count(&self) -> usize {
        self.m.saturating_sub(2).pow(3)
    }
}

/// A generated linear system.
#[derive(Debug, Clone)]
pub struct GeneratedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Present for the finite-element discretisation.
    pub elements: Option<ElementConnectivity>,
}

pub fn source_term(x: f64, y: f64, _z: f64) -> f64 {
    (x + y).cos()
}

struct Grid {
    m: usize,
    h: f64,
}

impl Grid {
    fn interior_index(&self, ix: usize, iy: usize, iz: usize) -> Option<usize> {
        let last = self.m - 1;
        if ix == 0 || iy == 0 || iz == 0 || ix == last || iy == last || iz == last {
            return None;
        }
        let k = self.m - 2;
        Some((ix - 1) + k * (iy - 1) + k * k * (iz - 1))
    }

    fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

pub fn gen_laplace(spec: MeshSpec) -> Result<GeneratedSystem, GenError> {
    if spec.m < 3 {
        return Err(GenError::TooSmall(spec.m));
    }
    let grid = Grid {
        m: spec.m,
        h: spec.h(),
    };
    match spec.discretization {
        Discretization::Fd7 => Ok(gen_fd7(&grid)),
        Discretization::HexFem => Ok(gen_hex_fem(&grid)),
    }
}

fn gen_fd7(g: &Grid) -> GeneratedSystem {
    let n = (g.m - 2).pow(3);
    let inv_h2 = 1.0 / (g.h * g.h);
    let mut triplets = Vec::with_capacity(7 * n);
    let mut rhs = vec![0.0; n];
    for iz in 1..g.m - 1 {
        for iy in 1..g.m - 1 {
            for ix in 1..g.m - 1 {
                let row = g.interior_index(ix, iy, iz).unwrap();
                let neighbors = [
                    (ix - 1, iy, iz),
                    (ix + 1, iy, iz),
                    (ix, iy - 1, iz),
                    (ix, iy + 1, iz),
                    (ix, iy, iz - 1),
                    (ix, iy, iz + 1),
                ];
                triplets.push((row, row, 6.0 * inv_h2));
                for (jx, jy, jz) in neighbors {
                    if let Some(col) = g.interior_index(jx, jy, jz) {
                        triplets.push((row, col, -inv_h2));
                    }
                }
                rhs[row] = source_term(g.coord(ix), g.coord(iy), g.coord(iz));
            }
        }
    }
    GeneratedSystem {
        matrix: CsrMatrix::from_triplets(n, n, triplets).expect("stencil indices are in range"),
        rhs,
        elements: None,
    }
}

/// 2-point Gauss rule on `[0, 1]`.
fn gauss_points() -> [(f64, f64); 2] {
    let d = 0.5 / 3f64.sqrt();
    [(0.5 - d, 0.5), (0.5 + d, 0.5)]
}

/// Local corner `a` of the unit cube, x fastest: `(a & 1, a >> 1 & 1, a >> 2 & 1)`.
fn corner(a: usize) -> [usize; 3] {
    [a & 1, (a >> 1) & 1, (a >> 2) & 1]
}

fn shape(a: usize, xi: [f64; 3]) -> f64 {
    let c = corner(a);
    (0..3)
        .map(|d| if c[d] == 1 { xi[d] } else { 1.0 - xi[d] })
        .product()
}

fn shape_grad(a: usize, xi: [f64; 3]) -> [f64; 3] {
    let c = corner(a);
    let f = |d: usize| if c[d] == 1 { xi[d] } else { 1.0 - xi[d] };
    let df = |d: usize| if c[d] == 1 { 1.0 } else { -1.0 };
    [df(0) * f(1) * f(2), f(0) * df(1) * f(2), f(0) * f(1) * df(2)]
}

/// Stiffness matrix of the Laplacian on a cube of side `h`, row-major 8x8,
/// integrated with the 2x2x2 Gauss rule.
pub fn hex_element_stiffness(h: f64) -> Vec<f64> {
    let mut k = vec![0.0; 64];
    for (x, wx) in gauss_points() {
        for (y, wy) in gauss_points() {
            for (z, wz) in gauss_points() {
                let xi = [x, y, z];
                let w = wx * wy * wz;
                for a in 0..8 {
                    let ga = shape_grad(a, xi);
                    for b in 0..8 {
                        let gb = shape_grad(b, xi);
                        // physical gradients are reference gradients / h, volume h^3
                        k[a * 8 + b] += w * h * (ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2]);
                    }
                }
            }
        }
    }
    k
}

fn hex_element_load(g: &Grid, origin: [usize; 3]) -> Vec<f64> {
    let vol = g.h.powi(3);
    let mut load = vec![0.0; 8];
    for (x, wx) in gauss_points() {
        for (y, wy) in gauss_points() {
            for (z, wz) in gauss_points() {
                let xi = [x, y, z];
                let px = (origin[0] as f64 + x) * g.h;
                let py = (origin[1] as f64 + y) * g.h;
                let pz = (origin[2] as f64 + z) * g.h;
                let fw = wx * wy * wz * vol * source_term(px, py, pz);
                for (a, la) in load.iter_mut().enumerate() {
                    *la += fw * shape(a, xi);
                }
            }
        }
    }
    load
}

fn gen_hex_fem(g: &Grid) -> GeneratedSystem {
    let n = (g.m - 2).pow(3);
    let ke = hex_element_stiffness(g.h);
    let ne = g.m - 1;
    let mut elements = Vec::with_capacity(ne.pow(3));
    for ez in 0..ne {
        for ey in 0..ne {
            for ex in 0..ne {
                let nodes = (0..8)
                    .map(|a| {
                        let c = corner(a);
                        g.interior_index(ex + c[0], ey + c[1], ez + c[2])
                    })
                    .collect();
                elements.push(Element {
                    nodes,
                    load: Some(hex_element_load(g, [ex, ey, ez])),
                });
            }
        }
    }
    let conn = ElementConnectivity {
        n_nodes: n,
        nodes_per_element: 8,
        elements,
        assembly: Some(ElementAssembly { element_matrix: ke }),
    };
    let (matrix, rhs) = conn.assemble().expect("generated mesh is consistent");
    GeneratedSystem {
        matrix,
        rhs,
        elements: Some(conn),
    }
}

/// The 5x5 worked CSR example (0-based internally).
pub fn csr_example() -> CsrMatrix {
    CsrMatrix::from_one_based(
        5,
        5,
        &[1, 3, 5, 7, 10, 12],
        &[1, 2, 2, 3, 1, 3, 2, 4, 5, 3, 5],
        &[-5.0, 14.0, 8.0, 1.0, 2.0, 10.0, 4.0, 2.0, 9.0, 15.0, 7.0],
    )
    .expect("worked example is valid CSR")
}

/// Nonzero pattern of the 10x10 three-band splitting example, 1-based `(row, col)`.
pub const THREE_BAND_PATTERN: &[(usize, usize)] = &[
    (1, 1), (1, 2), (1, 4), (1, 6),
    (2, 1), (2, 2), (2, 3), (2, 5),
    (3, 2), (3, 3), (3, 4), (3, 5),
    (4, 1), (4, 3), (4, 4), (4, 7), (4, 10),
    (5, 3), (5, 5), (5, 7),
    (6, 1), (6, 6), (6, 7), (6, 9),
    (7, 3), (7, 5), (7, 6), (7, 7), (7, 10),
    (8, 2), (8, 4), (8, 8), (8, 10),
    (9, 6), (9, 9),
    (10, 4), (10, 7), (10, 8), (10, 10),
];

/// The 10x10 band-splitting pattern with every nonzero set to 1.
pub fn three_band_matrix() -> CsrMatrix {
    CsrMatrix::from_triplets(10, 10, THREE_BAND_PATTERN.iter().map(|&(i, j)| (i - 1, j - 1, 1.0)))
        .expect("pattern is in range")
}

/// Same pattern, diagonal = off-diagonal count + 1 and off-diagonals -1,
/// hence strictly diagonally dominant.
pub fn three_band_dominant_matrix() -> CsrMatrix {
    let mut degree = [0usize; 10];
    for &(i, j) in THREE_BAND_PATTERN {
        if i != j {
            degree[i - 1] += 1;
        }
    }
    CsrMatrix::from_triplets(
        10,
        10,
        THREE_BAND_PATTERN.iter().map(|&(i, j)| {
            let v = if i == j { degree[i - 1] as f64 + 1.0 } else { -1.0 };
            (i - 1, j - 1, v)
        }),
    )
    .expect("pattern is in range")
}

/// `tridiag(-1, 2, -1)` of size `n`.
pub fn tridiagonal(n: usize) -> CsrMatrix {
    let triplets = (0..n).flat_map(|i| {
        let mut row = vec![(i, i, 2.0)];
        if i > 0 {
            row.push((i, i - 1, -1.0));
        }
        if i + 1 < n {
            row.push((i, i + 1, -1.0));
        }
        row
    });
    CsrMatrix::from_triplets(n, n, triplets).expect("tridiagonal indices are in range")
}

/// `[[1, 2], [3, 1]]`: Jacobi iteration matrix has spectral radius `sqrt(6)`.
pub fn divergent_2x2() -> (CsrMatrix, Vec<f64>) {
    let a = CsrMatrix::from_dense(2, 2, &[1.0, 2.0, 3.0, 1.0]).unwrap();
    (a, vec![1.0, 1.0])
}

/// Named fixtures: `fig4-example`, `fig5-10x10`, `fig5-10x10-dominant`,
/// `tridiag-<n>`, `divergent-2x2`.
///
/// Right-hand sides are `A * 1` for the worked examples (so the exact
/// solution is all ones) and all ones for the tridiagonal family.
pub fn gen_crafted(name: &str) -> Result<(CsrMatrix, Vec<f64>), GenError> {
    let with_ones_solution = |a: CsrMatrix| {
        let b = spmv(&a, &vec![1.0; a.n_cols()]).unwrap();
        (a, b)
    };
    match name {
        "fig4-example" => Ok(with_ones_solution(csr_example())),
        "fig5-10x10" => Ok(with_ones_solution(three_band_matrix())),
        "fig5-10x10-dominant" => Ok(with_ones_solution(three_band_dominant_matrix())),
        "divergent-2x2" => Ok(divergent_2x2()),
        other => {
            let n = other
                .strip_prefix("tridiag-")
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .ok_or_else(|| GenError::UnknownName(other.to_string()))?;
            Ok((tridiagonal(n), vec![1.0; n]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{is_diagonally_dominant, sequential_jacobi, JacobiConfig};

    #[test]
    fn fd7_single_interior_node() {
        let sys = gen_laplace(MeshSpec::new(3, Discretization::Fd7)).unwrap();
        assert_eq!(sys.matrix.n_rows(), 1);
        assert_eq!(sys.matrix.get(0, 0), Some(24.0));
        assert_eq!(sys.rhs, vec![1f64.cos()]);
    }

    #[test]
    fn too_small_mesh() {
        assert_eq!(
            gen_laplace(MeshSpec::new(2, Discretization::Fd7)).unwrap_err(),
            GenError::TooSmall(2)
        );
    }

    #[test]
    fn hex_fem_row_widths() {
        let sys = gen_laplace(MeshSpec::new(5, Discretization::HexFem)).unwrap();
        assert_eq!(sys.matrix.n_rows(), 27);
        assert_eq!(sys.matrix.max_row_nnz(), 27);
        assert!(sys.matrix.is_symmetric());
        let fd = gen_laplace(MeshSpec::new(5, Discretization::Fd7)).unwrap();
        assert_eq!(fd.matrix.max_row_nnz(), 7);
        assert!(fd.matrix.is_symmetric());
    }

    #[test]
    fn hex_element_stiffness_known_entries() {
        // trilinear cube: diagonal h/3, edge neighbours 0, face diagonal -h/12, body diagonal -h/12
        let h = 0.25;
        let k = hex_element_stiffness(h);
        assert!((k[0] - h / 3.0).abs() < 1e-15);
        assert!(k[1].abs() < 1e-15);
        assert!((k[3] + h / 12.0).abs() < 1e-15);
        assert!((k[7] + h / 12.0).abs() < 1e-15);
        for a in 0..8 {
            let row_sum: f64 = (0..8).map(|b| k[a * 8 + b]).sum();
            assert!(row_sum.abs() < 1e-15);
        }
    }

    #[test]
    fn fd7_m9_dominance_and_convergence() {
        let sys = gen_laplace(MeshSpec::new(9, Discretization::Fd7)).unwrap();
        assert_eq!(sys.matrix.n_rows(), 343);
        assert!(is_diagonally_dominant(&sys.matrix));
        let rho = crate::sparse::spectral_radius_estimate(&sys.matrix, 500).unwrap();
        let exact = (std::f64::consts::PI / 8.0).cos();
        assert!(rho < 1.0 && (rho - exact).abs() < 1e-3, "{rho} vs {exact}");
        let (_, rep) = sequential_jacobi(&sys.matrix, &sys.rhs, &JacobiConfig::default()).unwrap();
        assert!(rep.converged);
    }

    #[test]
    fn crafted_fixtures() {
        let (a, b) = gen_crafted("fig4-example").unwrap();
        assert_eq!(a, csr_example());
        assert_eq!(b, vec![9.0, 9.0, 12.0, 15.0, 22.0]);
        let (a, _) = gen_crafted("fig5-10x10").unwrap();
        assert_eq!(a.nnz(), THREE_BAND_PATTERN.len());
        assert!(a.values().iter().all(|&v| v == 1.0));
        let (a, _) = gen_crafted("fig5-10x10-dominant").unwrap();
        assert!(is_diagonally_dominant(&a));
        let (a, b) = gen_crafted("tridiag-4").unwrap();
        assert_eq!((a.n_rows(), b.len()), (4, 4));
        let (a, _) = gen_crafted("divergent-2x2").unwrap();
        assert_eq!(a.to_dense(), vec![1.0, 2.0, 3.0, 1.0]);
        assert!(gen_crafted("nope").is_err());
        assert!(gen_crafted("tridiag-0").is_err());
    }
}
