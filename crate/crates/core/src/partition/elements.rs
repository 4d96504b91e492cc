use serde::{Deserialize, Serialize};

use super::PartitionError;
use crate::sparse::CsrMatrix;

/// One finite element. `None` marks a node eliminated by a Dirichlet condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub nodes: Vec<Option<usize>>,
    /// Element load vector, one entry per local node.
    pub load: Option<Vec<f64>>,
}

/// Element matrix shared by every element of a uniform mesh, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementAssembly {
    pub element_matrix: Vec<f64>,
}

/// Mesh connectivity, optionally with what is needed to reassemble the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementConnectivity {
    pub n_nodes: usize,
    pub nodes_per_element: usize,
    pub elements: Vec<Element>,
    pub assembly: Option<ElementAssembly>,
}

impl ElementConnectivity {
    /// Connectivity only, as read from an element file.
    pub fn from_nodes(n_nodes: usize, nodes_per_element: usize, elements: Vec<Vec<Option<usize>>>) -> Self {
        ElementConnectivity {
            n_nodes,
            nodes_per_element,
            elements: elements
                .into_iter()
                .map(|nodes| Element { nodes, load: None })
                .collect(),
            assembly: None,
        }
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        let bad = |m: String| Err(PartitionError::InvalidElements(m));
        let mut referenced = vec![false; self.n_nodes];
        for (e, el) in self.elements.iter().enumerate() {
            if el.nodes.len() != self.nodes_per_element {
                return bad(format!(
                    "element {e} has {} nodes, expected {}",
                    el.nodes.len(),
                    self.nodes_per_element
                ));
            }
            if let Some(load) = &el.load {
                if load.len() != self.nodes_per_element {
                    return bad(format!("element {e} load has wrong length"));
                }
            }
            for &node in el.nodes.iter().flatten() {
                if node >= self.n_nodes {
                    return bad(format!("element {e} references node {node} >= {}", self.n_nodes));
                }
                referenced[node] = true;
            }
        }
        if let Some(node) = referenced.iter().position(|r| !r) {
            return bad(format!("node {node} belongs to no element"));
        }
        if let Some(asm) = &self.assembly {
            if asm.element_matrix.len() != self.nodes_per_element.pow(2) {
                return bad("element matrix has wrong size".into());
            }
        }
        Ok(())
    }

    /// Elements sharing at least one (non-eliminated) node, sorted per element.
    pub fn element_adjacency(&self) -> Vec<Vec<usize>> {
        let mut node_elements = vec![Vec::new(); self.n_nodes];
        for (e, el) in self.elements.iter().enumerate() {
            for &node in el.nodes.iter().flatten() {
                node_elements[node].push(e);
            }
        }
        self.elements
            .iter()
            .enumerate()
            .map(|(e, el)| {
                let mut adj: Vec<usize> = el
                    .nodes
                    .iter()
                    .flatten()
                    .flat_map(|&n| node_elements[n].iter().copied())
                    .filter(|&f| f != e)
                    .collect();
                adj.sort_unstable();
                adj.dedup();
                adj
            })
            .collect()
    }

    /// Triplets contributed by a subset of elements, in element order.
    pub(crate) fn element_triplets<'a>(
        &'a self,
        element_matrix: &'a [f64],
        elements: impl Iterator<Item = usize> + 'a,
    ) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
        let npe = self.nodes_per_element;
        elements.flat_map(move |e| {
            let nodes = &self.elements[e].nodes;
            (0..npe).flat_map(move |a| {
                (0..npe).filter_map(move |b| match (nodes[a], nodes[b]) {
                    (Some(i), Some(j)) => Some((i, j, element_matrix[a * npe + b])),
                    _ => None,
                })
            })
        })
    }

    /// Assembles the global matrix and load vector from element data.
    pub fn assemble(&self) -> Result<(CsrMatrix, Vec<f64>), PartitionError> {
        self.validate()?;
        let asm = self.assembly.as_ref().ok_or_else(|| {
            PartitionError::InvalidElements("connectivity carries no element matrices".into())
        })?;
        let matrix = CsrMatrix::from_triplets(
            self.n_nodes,
            self.n_nodes,
            self.element_triplets(&asm.element_matrix, 0..self.elements.len()),
        )?;
        let mut rhs = vec![0.0; self.n_nodes];
        for el in &self.elements {
            let load = el
                .load
                .as_ref()
                .ok_or_else(|| PartitionError::InvalidElements("element without load vector".into()))?;
            for (a, node) in el.nodes.iter().enumerate() {
                if let Some(i) = node {
                    rhs[*i] += load[a];
                }
            }
        }
        Ok((matrix, rhs))
    }
}

/// A 1D chain of unit-length linear elements with stiffness `[[1,-1],[-1,1]]`.
///
/// With `dirichlet_ends`, the two end nodes are eliminated and the remaining
/// `n_elements - 1` nodes are renumbered from 0.
pub fn linear_chain(n_elements: usize, dirichlet_ends: bool) -> ElementConnectivity {
    let n_full = n_elements + 1;
    let map = |k: usize| {
        if dirichlet_ends {
            (k > 0 && k < n_full - 1).then(|| k - 1)
        } else {
            Some(k)
        }
    };
    let elements = (0..n_elements)
        .map(|e| Element {
            nodes: vec![map(e), map(e + 1)],
            load: Some(vec![0.5, 0.5]),
        })
        .collect();
    ElementConnectivity {
        n_nodes: if dirichlet_ends { n_full - 2 } else { n_full },
        nodes_per_element: 2,
        elements,
        assembly: Some(ElementAssembly {
            element_matrix: vec![1.0, -1.0, -1.0, 1.0],
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_assembles_tridiagonal() {
        let (a, b) = linear_chain(4, false).assemble().unwrap();
        assert_eq!(a.n_rows(), 5);
        assert_eq!(
            (0..5).map(|i| a.get(i, i).unwrap()).collect::<Vec<_>>(),
            vec![1.0, 2.0, 2.0, 2.0, 1.0]
        );
        assert_eq!(b, vec![0.5, 1.0, 1.0, 1.0, 0.5]);
        let (a, _) = linear_chain(4, true).assemble().unwrap();
        assert_eq!(a, crate::testgen::tridiagonal(3));
    }

    #[test]
    fn adjacency_of_chain() {
        let adj = linear_chain(4, false).element_adjacency();
        assert_eq!(adj, vec![vec![1], vec![0, 2], vec![1, 3], vec![2]]);
    }

    #[test]
    fn validation_catches_errors() {
        let mut c = linear_chain(2, false);
        c.elements[0].nodes[0] = Some(9);
        assert!(c.validate().is_err());
        let c = ElementConnectivity::from_nodes(4, 2, vec![vec![Some(0), Some(1)], vec![Some(1), Some(2)]]);
        assert!(matches!(c.validate(), Err(PartitionError::InvalidElements(_))));
    }
}
