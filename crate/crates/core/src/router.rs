//! Noisy gating over the one-hop and high-order experts, threshold-based
//! active-set selection and the importance regularizer.

use serde::{Deserialize, Serialize};

use crate::nn;
use crate::tensor::{ParamStore, ReduceAxis, Result, RngStream, Tape, Tensor, TensorError, Var};

/// Number of experts routed between.
pub const N_EXPERTS: usize = 2;
/// Index of the one-hop expert in gate vectors.
pub const ONE_HOP: usize = 0;
/// Index of the high-order (virtual hub) expert in gate vectors.
pub const HIGH_ORDER: usize = 1;

const IMPORTANCE_EPS: f64 = 1e-8;
const W_GATE: &str = "router.w_gate";
const W_NOISE: &str = "router.w_noise";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterParams {
    pub top_p: f64,
    pub noise_enabled: bool,
}

impl RouterParams {
    pub fn new(top_p: f64, noise_enabled: bool) -> Result<Self> {
        if !(top_p > 0.0 && top_p < 1.0) {
            return Err(TensorError::Contract(format!("top_p must lie in (0, 1), got {top_p}")));
        }
        Ok(Self { top_p, noise_enabled })
    }
}

/// Zero gate projection (uniform routing at start) and a Glorot noise
/// projection.
pub fn init_router(store: &mut ParamStore, rng: &mut RngStream, dim: usize) -> Result<()> {
    store.insert(W_GATE, Tensor::zeros(&[dim, N_EXPERTS]))?;
    store.insert(W_NOISE, nn::glorot(rng, dim, N_EXPERTS))
}

/// Routing probabilities `softmax(n W_g + eps * softplus(n W_n))`, one row
/// per agent. `eps` is standard normal when `train && noise_enabled` and
/// zero otherwise; `rng` is only drawn from in that case.
pub fn gate(
    tape: &mut Tape,
    store: &ParamStore,
    nodes: Var,
    params: &RouterParams,
    rng: &mut RngStream,
    train: bool,
) -> Result<Var> {
    let wg = tape.param(W_GATE, store)?;
    let mut logits = tape.matmul(nodes, wg)?;
    if train && params.noise_enabled {
        let wn = tape.param(W_NOISE, store)?;
        let raw = tape.matmul(nodes, wn)?;
        let scale = tape.softplus(raw)?;
        let shape = tape.value(scale).shape().to_vec();
        let eps: Vec<f64> = (0..tape.value(scale).numel()).map(|_| rng.normal()).collect();
        let eps = tape.constant(Tensor::new(shape, eps)?);
        let noise = tape.mul(scale, eps)?;
        logits = tape.add(logits, noise)?;
    }
    tape.softmax(logits)
}

/// Expert indices by descending probability, ties to the lower index.
pub fn sorted_order(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}

/// Smallest descending-probability prefix whose cumulative mass exceeds
/// `p`: every prefix element with cumulative mass `<= p`, plus the first
/// one that pushes it past `p`. Returned in selection order.
pub fn top_p_select(probs: &[f64], p: f64) -> Vec<usize> {
    let mut active = Vec::new();
    let mut cumulative = 0.0;
    for k in sorted_order(probs) {
        cumulative += probs[k];
        active.push(k);
        if cumulative > p {
            break;
        }
    }
    active
}

/// `g_k / sum_{j in S} g_j` inside `active`, zero outside.
pub fn renormalize(probs: &[f64], active: &[usize]) -> Vec<f64> {
    let total: f64 = active.iter().map(|&k| probs[k]).sum();
    let mut out = vec![0.0; probs.len()];
    for &k in active {
        out[k] = probs[k] / total;
    }
    out
}

/// Routing decision for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct GateDistribution {
    pub probs: Vec<f64>,
    pub sorted_order: Vec<usize>,
    pub active_set: Vec<usize>,
    pub renorm_weights: Vec<f64>,
}

impl GateDistribution {
    pub fn new(probs: Vec<f64>, top_p: f64) -> Self {
        let active_set = top_p_select(&probs, top_p);
        let renorm_weights = renormalize(&probs, &active_set);
        Self {
            sorted_order: sorted_order(&probs),
            probs,
            active_set,
            renorm_weights,
        }
    }

    /// Active experts as `onehop`/`high` names joined by `;`, in
    /// expert-index order.
    pub fn active_label(&self) -> String {
        let mut set = self.active_set.clone();
        set.sort_unstable();
        set.iter()
            .map(|&k| if k == ONE_HOP { "onehop" } else { "high" })
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Per-agent decisions from an `N x 2` probability matrix.
pub fn distributions(probs: &Tensor, top_p: f64) -> Vec<GateDistribution> {
    (0..probs.outer_len())
        .map(|i| GateDistribution::new(probs.row(i).to_vec(), top_p))
        .collect()
}

/// Differentiable renormalization `g * mask / sum(g * mask)` with the
/// active-set masks held constant.
pub fn renormalize_on_tape(tape: &mut Tape, probs: Var, gates: &[GateDistribution]) -> Result<Var> {
    let n = gates.len();
    let mut mask = Tensor::zeros(&[n, N_EXPERTS]);
    for (i, g) in gates.iter().enumerate() {
        for &k in &g.active_set {
            mask.data_mut()[i * N_EXPERTS + k] = 1.0;
        }
    }
    let mask = tape.constant(mask);
    let kept = tape.mul(probs, mask)?;
    let total = tape.sum(kept, ReduceAxis::Last)?;
    let total = tape.reshape(total, vec![n, 1])?;
    tape.div(kept, total)
}

/// Per-agent weighted sum `w_0 * one_hop + w_1 * high` of the expert
/// outputs, with `weights` an `N x 2` matrix.
pub fn fuse(tape: &mut Tape, weights: Var, one_hop: Var, high: Var) -> Result<Var> {
    let mut parts = Vec::with_capacity(N_EXPERTS);
    for (k, expert) in [(ONE_HOP, one_hop), (HIGH_ORDER, high)] {
        let mut select = Tensor::zeros(&[N_EXPERTS, 1]);
        select.data_mut()[k] = 1.0;
        let select = tape.constant(select);
        let column = tape.matmul(weights, select)?;
        parts.push(tape.mul(expert, column)?);
    }
    tape.add(parts[0], parts[1])
}

/// Mean over agents of `std(g_i) / (mean(g_i) + 1e-8)`, population std.
pub fn importance_loss(tape: &mut Tape, probs: Var) -> Result<Var> {
    let shape = tape.value(probs).shape().to_vec();
    let (n, k) = (shape[0], shape[1]);
    let mean = tape.mean(probs, ReduceAxis::Last)?;
    let mean = tape.reshape(mean, vec![n, 1])?;
    let centered = tape.sub(probs, mean)?;
    // population std of each row: |g - mean| / sqrt(k), one norm per row
    let spread = tape.l2_norm(centered)?;
    let spread = tape.reshape(spread, vec![n, 1])?;
    let std = tape.scale(spread, 1.0 / (k as f64).sqrt())?;
    let eps = tape.constant(Tensor::scalar(IMPORTANCE_EPS));
    let denom = tape.add(mean, eps)?;
    let cv = tape.div(std, denom)?;
    tape.mean(cv, ReduceAxis::All)
}
