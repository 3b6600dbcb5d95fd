use std::cmp::Ordering;

use super::InteractionGraph;
use crate::tensor::Tensor;

/// Directed kNN graph under cosine similarity of the rows of `embeddings`.
///
/// Node `i` links to its `min(k, N-1)` most similar other nodes, ties going
/// to the lower index. A zero-norm row has similarity `-inf` to everything:
/// it selects nobody and is chosen by others only after every finite
/// candidate.
pub fn knn_graph(embeddings: &Tensor, k: usize) -> InteractionGraph {
    let n = embeddings.shape().first().copied().unwrap_or(0);
    let norms: Vec<f64> = (0..n)
        .map(|i| embeddings.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let similarity = |i: usize, j: usize| -> f64 {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            return f64::NEG_INFINITY;
        }
        let dot: f64 = embeddings.row(i).iter().zip(embeddings.row(j)).map(|(a, b)| a * b).sum();
        dot / (norms[i] * norms[j])
    };

    let mut edges = Vec::new();
    for i in 0..n {
        if norms[i] == 0.0 {
            continue;
        }
        let mut candidates: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, similarity(i, j))).collect();
        candidates.sort_by(|a, b| match b.1.partial_cmp(&a.1) {
            Some(Ordering::Equal) | None => a.0.cmp(&b.0),
            Some(o) => o,
        });
        edges.extend(candidates.into_iter().take(k).map(|(j, _)| (i, j)));
    }
    InteractionGraph::from_edges(n, edges).expect("kNN edges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_node_has_no_edges() {
        assert!(knn_graph(&emb(&[&[1.0, 2.0]]), 4).edges().is_empty());
    }

    #[test]
    fn hand_enumerated_ties() {
        // sims: s01 = 1, s02 = 0, s12 = 0
        let g = knn_graph(&emb(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]), 1);
        assert_eq!(g.edges(), &[(0, 1), (1, 0), (2, 0)]);
    }

    #[test]
    fn large_k_gives_complete_graph() {
        let e = emb(&[&[1.0, 0.2], &[-0.3, 1.0], &[0.5, 0.5], &[2.0, -1.0]]);
        let g = knn_graph(&e, 10);
        for i in 0..4 {
            assert_eq!(g.out_degree(i), 3);
        }
        assert_eq!(g.edges().len(), 12);
        assert!(g.edges().iter().all(|(i, j)| i != j));
    }

    #[test]
    fn zero_norm_row_never_crashes() {
        let g = knn_graph(&emb(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]), 1);
        assert_eq!(g.out_degree(0), 0);
        assert!(!g.mask()[1][0] && !g.mask()[2][0]);
        let g = knn_graph(&emb(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]), 2);
        // with two picks, the zero row is the only remaining candidate
        assert!(g.mask()[1][0] && g.mask()[2][0]);
    }
}
