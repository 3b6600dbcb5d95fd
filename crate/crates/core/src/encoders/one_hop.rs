use crate::graph::InteractionGraph;
use crate::nn;
use crate::tensor::{ParamStore, Result, RngStream, Tape, Tensor, Var};

const MESSAGE: &str = "one_hop.message";
const UPDATE: &str = "one_hop.update";

pub fn init_one_hop(store: &mut ParamStore, rng: &mut RngStream, dim: usize, edge_dim: usize) -> Result<()> {
    nn::init_mlp(store, rng, MESSAGE, [2 * dim + edge_dim, dim, dim])?;
    nn::init_mlp(store, rng, UPDATE, [2 * dim, dim, dim])
}

/// Message passing over the graph's direct edges.
///
/// Edge `(i, j)` carries `message([n_i; n_j; e_ij])` to receiver `i`;
/// each node averages its incoming messages (zero if it has none) and
/// applies `update([n_i; m_i])`. `edges` holds one feature row per graph
/// edge, in edge order.
pub fn one_hop_expert(
    tape: &mut Tape,
    store: &ParamStore,
    nodes: Var,
    graph: &InteractionGraph,
    edges: Var,
) -> Result<Var> {
    let n = graph.n_real();
    let receivers: Vec<usize> = graph.edges().iter().map(|e| e.0).collect();
    let senders: Vec<usize> = graph.edges().iter().map(|e| e.1).collect();

    let recv = tape.gather_rows(nodes, receivers.clone())?;
    let send = tape.gather_rows(nodes, senders)?;
    let joined = tape.concat(&[recv, send, edges])?;
    let messages = nn::mlp(tape, store, MESSAGE, joined)?;
    let summed = tape.scatter_add_rows(messages, receivers, n)?;

    let inv_degree: Vec<f64> = (0..n)
        .map(|i| match graph.out_degree(i) {
            0 => 0.0,
            d => 1.0 / d as f64,
        })
        .collect();
    let inv_degree = tape.constant(Tensor::new(vec![n, 1], inv_degree)?);
    let mean = tape.mul(summed, inv_degree)?;

    let joined = tape.concat(&[nodes, mean])?;
    nn::mlp(tape, store, UPDATE, joined)
}
