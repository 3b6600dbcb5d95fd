use crate::data::FeatureTensor;
use crate::nn;
use crate::tensor::{ParamStore, Result, RngStream, Tape, Var};

const NAME: &str = "node_mlp";

pub fn init_node_encoder(store: &mut ParamStore, rng: &mut RngStream, t_obs: usize, dim: usize) -> Result<()> {
    nn::init_mlp(store, rng, NAME, [4 * t_obs, dim, dim])
}

/// Shared 2-layer MLP over each agent's flattened `T_obs x 4` history.
pub fn embed_nodes(tape: &mut Tape, store: &ParamStore, features: &FeatureTensor) -> Result<Var> {
    let x = tape.constant(features.to_matrix());
    nn::mlp(tape, store, NAME, x)
}
