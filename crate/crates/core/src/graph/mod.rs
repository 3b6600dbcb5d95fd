//! Interaction graphs, virtual-hub augmentation and effective resistance.

mod knn;
mod report;
mod resistance;

pub use knn::knn_graph;
pub use report::{resistance_report, write_resistance_csv, ResistanceRow};
pub use resistance::{effective_resistance, laplacian, LaplacianMatrix, ResistanceMatrix};

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("nodes {i} and {j} are in different components; resistance is infinite")]
    Disconnected { i: usize, j: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Anything with nodes `0..node_count()` and an undirected edge support.
pub trait Topology {
    fn node_count(&self) -> usize;
    /// Unit-weight undirected edges as `(min, max)` pairs.
    fn undirected_edges(&self) -> BTreeSet<(usize, usize)>;
}

/// Directed interaction graph over real agents.
///
/// An edge `(i, j)` sets `mask[i][j]` and means agent `i` receives
/// messages from agent `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    n_real: usize,
    edges: Vec<(usize, usize)>,
    mask: Vec<Vec<bool>>,
}

impl InteractionGraph {
    pub fn from_edges(n_real: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut mask = vec![vec![false; n_real]; n_real];
        for &(i, j) in &edges {
            if i >= n_real || j >= n_real {
                return Err(GraphError::Contract(format!("edge ({i}, {j}) out of range for {n_real} nodes")));
            }
            if i == j {
                return Err(GraphError::Contract(format!("self-loop at node {i}")));
            }
            if mask[i][j] {
                return Err(GraphError::Contract(format!("duplicate edge ({i}, {j})")));
            }
            mask[i][j] = true;
        }
        Ok(Self { n_real, edges, mask })
    }

    /// Path `0 - 1 - ... - (n-1)` with edges in both directions.
    pub fn chain(n: usize) -> Self {
        let edges = (1..n).flat_map(|i| [(i - 1, i), (i, i - 1)]).collect();
        Self::from_edges(n, edges).expect("valid chain")
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Self::from_edges(n, edges).expect("valid complete graph")
    }

    pub fn n_real(&self) -> usize {
        self.n_real
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn mask(&self) -> &[Vec<bool>] {
        &self.mask
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.mask[i].iter().filter(|&&b| b).count()
    }

    /// Adds the undirected edge `{i, j}` as two directed edges, skipping
    /// directions already present.
    pub fn with_undirected_edge(&self, i: usize, j: usize) -> Result<Self> {
        let mut edges = self.edges.clone();
        for (a, b) in [(i, j), (j, i)] {
            if a < self.n_real && b < self.n_real && !self.mask[a][b] {
                edges.push((a, b));
            }
        }
        Self::from_edges(self.n_real, edges)
    }
}

impl Topology for InteractionGraph {
    fn node_count(&self) -> usize {
        self.n_real
    }

    fn undirected_edges(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect()
    }
}

/// Real graph plus `n_virtual` hub nodes, each linked to every real node.
/// Virtual node `k` has flat index `n_real + k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedGraph {
    base: InteractionGraph,
    n_virtual: usize,
}

pub fn augment_with_virtual(graph: &InteractionGraph, n_virtual: usize) -> Result<AugmentedGraph> {
    if n_virtual == 0 {
        return Err(GraphError::Contract("need at least one virtual node".into()));
    }
    Ok(AugmentedGraph {
        base: graph.clone(),
        n_virtual,
    })
}

impl AugmentedGraph {
    pub fn base(&self) -> &InteractionGraph {
        &self.base
    }

    pub fn n_virtual(&self) -> usize {
        self.n_virtual
    }

    /// Directed real-to-virtual and virtual-to-real pairs, flat indices.
    pub fn virtual_edges(&self) -> Vec<(usize, usize)> {
        let n = self.base.n_real;
        (0..n)
            .flat_map(|i| (0..self.n_virtual).flat_map(move |k| [(i, n + k), (n + k, i)]))
            .collect()
    }

    /// Virtual neighbours of real node `i`.
    pub fn virtual_neighbors(&self, i: usize) -> Vec<usize> {
        let n = self.base.n_real;
        self.virtual_edges()
            .into_iter()
            .filter(|&(a, b)| a == i && b >= n)
            .map(|(_, b)| b)
            .collect()
    }
}

impl Topology for AugmentedGraph {
    fn node_count(&self) -> usize {
        self.base.n_real + self.n_virtual
    }

    fn undirected_edges(&self) -> BTreeSet<(usize, usize)> {
        let mut e = self.base.undirected_edges();
        let n = self.base.n_real;
        for i in 0..n {
            for k in 0..self.n_virtual {
                e.insert((i, n + k));
            }
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hub_over_chain_edge_count() {
        let aug = augment_with_virtual(&InteractionGraph::chain(5), 1).unwrap();
        assert_eq!(aug.undirected_edges().len(), 9);
        assert_eq!(aug.node_count(), 6);
    }

    #[test]
    fn two_hubs_over_three_nodes() {
        let aug = augment_with_virtual(&InteractionGraph::from_edges(3, vec![]).unwrap(), 2).unwrap();
        for i in 0..3 {
            assert_eq!(aug.virtual_neighbors(i), vec![3, 4]);
        }
        // no virtual-virtual edges
        assert!(!aug.undirected_edges().contains(&(3, 4)));
        assert_eq!(aug.base().edges().len(), 0);
    }

    #[test]
    fn zero_hubs_rejected() {
        assert!(augment_with_virtual(&InteractionGraph::chain(3), 0).is_err());
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert!(InteractionGraph::from_edges(2, vec![(0, 0)]).is_err());
        assert!(InteractionGraph::from_edges(2, vec![(0, 1), (0, 1)]).is_err());
        let g = InteractionGraph::from_edges(2, vec![(0, 1)]).unwrap();
        assert!(g.mask()[0][1] && !g.mask()[1][0]);
    }
}
