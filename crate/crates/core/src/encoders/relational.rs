use crate::nn::{self, Aggregator, MASKED};
use crate::tensor::{ParamStore, Result, RngStream, Tape, Tensor, Var};

const NAME: &str = "relational";

pub fn init_relational(store: &mut ParamStore, rng: &mut RngStream, dim: usize) -> Result<()> {
    nn::init_attention(store, rng, &format!("{NAME}.attn"), dim)?;
    nn::init_linear(store, rng, &format!("{NAME}.out"), dim, dim, true)?;
    nn::init_norm(store, &format!("{NAME}.norm"), dim)
}

/// Additive attention bias: 0 where `i` may attend to `j` (an edge or the
/// diagonal), [`MASKED`] elsewhere.
fn mask_bias(mask: &[Vec<bool>]) -> Tensor {
    let n = mask.len();
    let mut bias = Tensor::full(&[n, n], MASKED);
    for (i, row) in mask.iter().enumerate() {
        for (j, &allowed) in row.iter().enumerate() {
            if allowed || i == j {
                bias.data_mut()[i * n + j] = 0.0;
            }
        }
    }
    bias
}

/// Masked single-layer attention with a residual connection and layer
/// normalization: `norm(n + out(attend(n, M)))`.
///
/// Agent `i` attends over `{j : mask[i][j]} ∪ {i}`.
pub fn relational_encode(
    tape: &mut Tape,
    store: &ParamStore,
    nodes: Var,
    mask: &[Vec<bool>],
    eps: f64,
) -> Result<Var> {
    let attended = nn::attend(
        tape,
        store,
        &format!("{NAME}.attn"),
        nodes,
        nodes,
        Some(mask_bias(mask)),
        Aggregator::Attention,
    )?;
    let projected = nn::linear(tape, store, &format!("{NAME}.out"), attended)?;
    let residual = tape.add(nodes, projected)?;
    nn::norm(tape, store, &format!("{NAME}.norm"), residual, eps)
}
