//! Layer building blocks shared by the encoders, router and decoder.
//!
//! Layers are stateless: parameters live in a [`ParamStore`] under dotted
//! names and are bound onto the tape on use.

use serde::{Deserialize, Serialize};

use crate::tensor::{ParamStore, Result, RngStream, Tape, Tensor, Var};

/// Logit offset that removes a key from an attention softmax.
pub(crate) const MASKED: f64 = -1e9;

/// How a node set summarizes another node set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregator {
    /// Single-head scaled dot-product attention.
    #[default]
    Attention,
    /// Uniform mean over the value projections.
    Mean,
}

/// Glorot-uniform weight and zero bias under `name.weight` / `name.bias`.
pub(crate) fn init_linear(
    store: &mut ParamStore,
    rng: &mut RngStream,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    bias: bool,
) -> Result<()> {
    store.insert(format!("{name}.weight"), glorot(rng, fan_in, fan_out))?;
    if bias {
        store.insert(format!("{name}.bias"), Tensor::zeros(&[fan_out]))?;
    }
    Ok(())
}

pub(crate) fn glorot(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.uniform_range(-a, a)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("glorot shape")
}

pub(crate) fn init_mlp(
    store: &mut ParamStore,
    rng: &mut RngStream,
    name: &str,
    dims: [usize; 3],
) -> Result<()> {
    init_linear(store, rng, &format!("{name}.l1"), dims[0], dims[1], true)?;
    init_linear(store, rng, &format!("{name}.l2"), dims[1], dims[2], true)
}

/// Gain 1, offset 0 under `name.gain` / `name.offset`.
pub(crate) fn init_norm(store: &mut ParamStore, name: &str, dim: usize) -> Result<()> {
    store.insert(format!("{name}.gain"), Tensor::full(&[dim], 1.0))?;
    store.insert(format!("{name}.offset"), Tensor::zeros(&[dim]))
}

pub(crate) fn init_attention(store: &mut ParamStore, rng: &mut RngStream, name: &str, dim: usize) -> Result<()> {
    for proj in ["query", "key", "value"] {
        init_linear(store, rng, &format!("{name}.{proj}"), dim, dim, false)?;
    }
    Ok(())
}

pub(crate) fn linear(tape: &mut Tape, store: &ParamStore, name: &str, x: Var) -> Result<Var> {
    let w = tape.param(&format!("{name}.weight"), store)?;
    let y = tape.matmul(x, w)?;
    match store.get(&format!("{name}.bias")) {
        Some(_) => {
            let b = tape.param(&format!("{name}.bias"), store)?;
            tape.add(y, b)
        }
        None => Ok(y),
    }
}

/// `l2(gelu(l1(x)))`.
pub(crate) fn mlp(tape: &mut Tape, store: &ParamStore, name: &str, x: Var) -> Result<Var> {
    let h = linear(tape, store, &format!("{name}.l1"), x)?;
    let h = tape.gelu(h)?;
    linear(tape, store, &format!("{name}.l2"), h)
}

/// Layer normalization followed by the learned per-feature affine map.
pub(crate) fn norm(tape: &mut Tape, store: &ParamStore, name: &str, x: Var, eps: f64) -> Result<Var> {
    let y = tape.layer_norm(x, eps)?;
    let g = tape.param(&format!("{name}.gain"), store)?;
    let b = tape.param(&format!("{name}.offset"), store)?;
    let y = tape.mul(y, g)?;
    tape.add(y, b)
}

/// Aggregates rows of `keys` for every row of `queries`.
///
/// With [`Aggregator::Attention`], row `q` gets `softmax(q K^T / sqrt(d) +
/// bias_q) V`; `bias` entries of [`MASKED`] exclude a key. With
/// [`Aggregator::Mean`] the bias only decides which keys are averaged.
pub(crate) fn attend(
    tape: &mut Tape,
    store: &ParamStore,
    name: &str,
    queries: Var,
    keys: Var,
    bias: Option<Tensor>,
    aggregator: Aggregator,
) -> Result<Var> {
    let values = linear(tape, store, &format!("{name}.value"), keys)?;
    let weights = match aggregator {
        Aggregator::Attention => {
            let q = linear(tape, store, &format!("{name}.query"), queries)?;
            let k = linear(tape, store, &format!("{name}.key"), keys)?;
            let kt = tape.transpose(k)?;
            let scores = tape.matmul(q, kt)?;
            let dim = tape.value(q).last_dim() as f64;
            let mut scores = tape.scale(scores, 1.0 / dim.sqrt())?;
            if let Some(b) = bias {
                let b = tape.constant(b);
                scores = tape.add(scores, b)?;
            }
            tape.softmax(scores)?
        }
        Aggregator::Mean => {
            let n_q = tape.value(queries).shape()[0];
            let n_k = tape.value(keys).shape()[0];
            let mut w = Tensor::zeros(&[n_q, n_k]);
            for r in 0..n_q {
                let allowed: Vec<usize> = (0..n_k)
                    .filter(|&c| bias.as_ref().is_none_or(|b| b.at2(r, c) > MASKED / 2.0))
                    .collect();
                for &c in &allowed {
                    w.data_mut()[r * n_k + c] = 1.0 / allowed.len() as f64;
                }
            }
            tape.constant(w)
        }
    };
    tape.matmul(weights, values)
}
