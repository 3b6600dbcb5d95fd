use nalgebra::{DMatrix, SymmetricEigen};

use super::{GraphError, Result, Topology};

/// Eigenvalues at or below this magnitude are treated as zero when forming
/// the pseudoinverse.
pub const EIGEN_CUTOFF: f64 = 1e-10;

/// `L = D - A` over the symmetrized unit-weight adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    values: DMatrix<f64>,
}

impl LaplacianMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Moore-Penrose pseudoinverse via full eigen-decomposition.
    pub fn pseudoinverse(&self) -> DMatrix<f64> {
        let n = self.size();
        if n == 0 {
            return DMatrix::zeros(0, 0);
        }
        let eig = SymmetricEigen::new(self.values.clone());
        let mut pinv = DMatrix::zeros(n, n);
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda.abs() <= EIGEN_CUTOFF {
                continue;
            }
            let u = eig.eigenvectors.column(k);
            pinv += (u * u.transpose()) / lambda;
        }
        // exact symmetry so that R_ij == R_ji bit for bit
        (&pinv + pinv.transpose()) * 0.5
    }
}

pub fn laplacian<G: Topology + ?Sized>(graph: &G) -> LaplacianMatrix {
    let n = graph.node_count();
    let mut values = DMatrix::zeros(n, n);
    for (i, j) in graph.undirected_edges() {
        values[(i, j)] -= 1.0;
        values[(j, i)] -= 1.0;
        values[(i, i)] += 1.0;
        values[(j, j)] += 1.0;
    }
    LaplacianMatrix { values }
}

/// Connected-component label of every node.
pub(crate) fn components<G: Topology + ?Sized>(graph: &G) -> Vec<usize> {
    let n = graph.node_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, j) in graph.undirected_edges() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// All-pairs effective resistance from one pseudoinverse.
#[derive(Debug, Clone)]
pub struct ResistanceMatrix {
    pinv: DMatrix<f64>,
    component: Vec<usize>,
}

impl ResistanceMatrix {
    pub fn new<G: Topology + ?Sized>(graph: &G) -> Self {
        Self {
            pinv: laplacian(graph).pseudoinverse(),
            component: components(graph),
        }
    }

    pub fn node_count(&self) -> usize {
        self.component.len()
    }

    /// `(e_i - e_j)^T L+ (e_i - e_j)`.
    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.node_count();
        if i >= n || j >= n {
            return Err(GraphError::Contract(format!("node ({i}, {j}) out of range for {n} nodes")));
        }
        if i == j {
            return Ok(0.0);
        }
        if self.component[i] != self.component[j] {
            return Err(GraphError::Disconnected { i, j });
        }
        let p = &self.pinv;
        Ok(p[(i, i)] + p[(j, j)] - 2.0 * p[(i, j)])
    }
}

pub fn effective_resistance<G: Topology + ?Sized>(graph: &G, i: usize, j: usize) -> Result<f64> {
    ResistanceMatrix::new(graph).get(i, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{augment_with_virtual, InteractionGraph};

    #[test]
    fn single_edge_laplacian() {
        let g = InteractionGraph::from_edges(2, vec![(0, 1)]).unwrap();
        let l = laplacian(&g);
        assert_eq!(l.values(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn chain_laplacian_is_tridiagonal() {
        let l = laplacian(&InteractionGraph::chain(5));
        let diag: Vec<f64> = (0..5).map(|i| l.values()[(i, i)]).collect();
        assert_eq!(diag, vec![1.0, 2.0, 2.0, 2.0, 1.0]);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j {
                    diag[i]
                } else if i.abs_diff(j) == 1 {
                    -1.0
                } else {
                    0.0
                };
                assert_eq!(l.values()[(i, j)], expect);
            }
        }
    }

    #[test]
    fn chain_endpoints_and_hub() {
        let chain = InteractionGraph::chain(5);
        assert!((effective_resistance(&chain, 0, 4).unwrap() - 4.0).abs() < 1e-9);
        let hub = augment_with_virtual(&chain, 1).unwrap();
        assert!((effective_resistance(&hub, 0, 4).unwrap() - 1.2).abs() < 1e-9);
    }

    #[test]
    fn tree_edges_have_unit_resistance() {
        // star with a tail: 0-1, 0-2, 0-3, 3-4
        let g = InteractionGraph::from_edges(5, vec![(0, 1), (2, 0), (0, 3), (4, 3)]).unwrap();
        for (i, j) in [(0, 1), (0, 2), (0, 3), (3, 4)] {
            assert!((effective_resistance(&g, i, j).unwrap() - 1.0).abs() < 1e-9);
        }
        assert!((effective_resistance(&g, 1, 4).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn disconnected_pair_is_an_error() {
        let g = InteractionGraph::from_edges(3, vec![(0, 1)]).unwrap();
        assert_eq!(effective_resistance(&g, 0, 2), Err(GraphError::Disconnected { i: 0, j: 2 }));
        assert_eq!(effective_resistance(&g, 2, 2), Ok(0.0));
    }
}
