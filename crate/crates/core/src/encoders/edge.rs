use crate::data::Scene;
use crate::graph::InteractionGraph;
use crate::nn;
use crate::tensor::{ParamStore, Result, RngStream, Tape, Tensor, Var};

const NAME: &str = "edge_mlp";

/// Columns of [`edge_geometry`]: `[dx, dy, |d|, drx, dry]`.
pub const EDGE_GEOMETRY_DIM: usize = 5;

/// Relative geometry of every graph edge at the last observed frame, in
/// edge order. For edge `(i, j)`, `d = p_j - p_i` and `dr = r_j - r_i`
/// where `r` is the last observed step.
pub fn edge_geometry(scene: &Scene, graph: &InteractionGraph) -> Tensor {
    let mut data = Vec::with_capacity(graph.edges().len() * EDGE_GEOMETRY_DIM);
    for &(i, j) in graph.edges() {
        let (pi, pj) = (scene.last_observed(i), scene.last_observed(j));
        let (ri, rj) = (scene.last_displacement(i), scene.last_displacement(j));
        let d = [pj[0] - pi[0], pj[1] - pi[1]];
        data.extend([d[0], d[1], d[0].hypot(d[1]), rj[0] - ri[0], rj[1] - ri[1]]);
    }
    Tensor::new(vec![graph.edges().len(), EDGE_GEOMETRY_DIM], data).expect("edge geometry shape")
}

pub fn init_edge_encoder(store: &mut ParamStore, rng: &mut RngStream, dim: usize) -> Result<()> {
    nn::init_mlp(store, rng, NAME, [EDGE_GEOMETRY_DIM, dim, dim])
}

/// 2-layer MLP over the rows of an [`edge_geometry`] table.
pub fn edge_features(tape: &mut Tape, store: &ParamStore, geometry: &Tensor) -> Result<Var> {
    let x = tape.constant(geometry.clone());
    nn::mlp(tape, store, NAME, x)
}
