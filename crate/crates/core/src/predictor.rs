//! Multi-head trajectory decoding, the min-over-heads loss and
//! displacement metrics.

use std::io::Write;

use crate::data::{Point, Scene, Transform};
use crate::nn;
use crate::tensor::{ParamStore, ReduceAxis, Result, RngStream, Tape, Tensor, TensorError, Var};

fn head_name(k: usize) -> String {
    format!("decoder.head{k:02}")
}

/// `heads` independent 2-layer MLPs from `[base; pair; routed]` (width
/// `3 * dim`) to `t_pred` 2D displacements.
pub fn init_decoder(
    store: &mut ParamStore,
    rng: &mut RngStream,
    dim: usize,
    heads: usize,
    t_pred: usize,
) -> Result<()> {
    if heads == 0 || t_pred == 0 {
        return Err(TensorError::Contract("decoder needs at least one head and one step".into()));
    }
    for k in 0..heads {
        nn::init_mlp(store, rng, &head_name(k), [3 * dim, 2 * dim, 2 * t_pred])?;
    }
    Ok(())
}

/// `2T x 2T` matrix turning a row of per-step displacements
/// `[dx_0, dy_0, dx_1, ...]` into cumulative offsets.
fn cumsum_matrix(t_pred: usize) -> Tensor {
    let n = 2 * t_pred;
    let mut m = Tensor::zeros(&[n, n]);
    for s in 0..t_pred {
        for t in s..t_pred {
            for c in 0..2 {
                m.data_mut()[(2 * s + c) * n + 2 * t + c] = 1.0;
            }
        }
    }
    m
}

/// Decodes `heads` candidate futures. Each returned handle is `N x 2T`,
/// row `i` holding `anchors[i] + cumsum(displacements)` flattened as
/// `[x_0, y_0, x_1, y_1, ...]`.
pub fn decode(
    tape: &mut Tape,
    store: &ParamStore,
    features: [Var; 3],
    anchors: &[Point],
    heads: usize,
    t_pred: usize,
) -> Result<Vec<Var>> {
    let joined = tape.concat(&features)?;
    let cumsum = tape.constant(cumsum_matrix(t_pred));
    let anchor_rows: Vec<Vec<f64>> = anchors
        .iter()
        .map(|p| (0..t_pred).flat_map(|_| [p[0], p[1]]).collect())
        .collect();
    let anchor = tape.constant(Tensor::from_rows(&anchor_rows)?);
    (0..heads)
        .map(|k| {
            let steps = nn::mlp(tape, store, &head_name(k), joined)?;
            let offsets = tape.matmul(steps, cumsum)?;
            tape.add(offsets, anchor)
        })
        .collect()
}

/// Ground-truth futures in the flattened layout produced by [`decode`].
pub fn flatten_future(future: &[Vec<Point>]) -> Result<Tensor> {
    Tensor::from_rows(&future.iter().map(|t| t.iter().flatten().copied().collect()).collect::<Vec<_>>())
}

/// Best-of-heads loss: for each agent, the head with the smallest summed
/// displacement over the horizon is selected, and the selected errors are
/// averaged over agents and steps. Only selected heads receive gradient.
///
/// Returns the loss and the selected head of each agent.
pub fn min_l2_loss(tape: &mut Tape, heads: &[Var], future: &Tensor) -> Result<(Var, Vec<usize>)> {
    if heads.is_empty() {
        return Err(TensorError::Contract("need at least one head".into()));
    }
    let n = future.shape()[0];
    let t = future.last_dim() / 2;
    let target = tape.constant(future.clone());
    let mut per_head = Vec::with_capacity(heads.len());
    for &h in heads {
        let diff = tape.sub(h, target)?;
        let pairs = tape.reshape(diff, vec![n * t, 2])?;
        let dist = tape.l2_norm(pairs)?;
        let dist = tape.reshape(dist, vec![n, t])?;
        let total = tape.sum(dist, ReduceAxis::Last)?;
        per_head.push(tape.reshape(total, vec![n, 1])?);
    }
    let table = tape.concat(&per_head)?;
    let k = heads.len();
    let winners: Vec<usize> = (0..n)
        .map(|i| {
            let row = tape.value(table).row(i);
            (0..k).fold(0, |best, j| if row[j] < row[best] { j } else { best })
        })
        .collect();
    let flat = tape.reshape(table, vec![n * k, 1])?;
    let picked = tape.gather_rows(flat, winners.iter().enumerate().map(|(i, &w)| i * k + w).collect())?;
    let sum = tape.sum(picked, ReduceAxis::All)?;
    Ok((tape.scale(sum, 1.0 / (n * t) as f64)?, winners))
}

/// Scalar parts of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub pred_loss: f64,
    pub imp_loss: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn new(pred_loss: f64, imp_loss: f64, lambda: f64) -> Self {
        Self {
            pred_loss,
            imp_loss,
            total: pred_loss + lambda * imp_loss,
            lambda,
        }
    }
}

/// `pred + lambda * imp` on the tape, with its value breakdown.
pub fn total_loss(tape: &mut Tape, pred: Var, imp: Var, lambda: f64) -> Result<(Var, LossBreakdown)> {
    let weighted = tape.scale(imp, lambda)?;
    let total = tape.add(pred, weighted)?;
    let breakdown = LossBreakdown::new(tape.value(pred).item()?, tape.value(imp).item()?, lambda);
    Ok((total, breakdown))
}

/// `K` candidate futures for every agent of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// Indexed `[head][agent][step]`.
    pub trajectories: Vec<Vec<Vec<Point>>>,
    /// Mean displacement of each head against the ground truth.
    pub head_losses: Vec<f64>,
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl PredictionSet {
    pub fn new(trajectories: Vec<Vec<Vec<Point>>>, future: &[Vec<Point>]) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(TensorError::Contract("prediction set needs at least one head".into()));
        }
        for head in &trajectories {
            let aligned = head.len() == future.len() && head.iter().zip(future).all(|(p, f)| p.len() == f.len());
            if !aligned {
                return Err(TensorError::Contract("predictions are not aligned with the future".into()));
            }
        }
        let head_losses = trajectories
            .iter()
            .map(|head| {
                let (mut sum, mut count) = (0.0, 0usize);
                for (p, f) in head.iter().zip(future) {
                    sum += p.iter().zip(f).map(|(&a, &b)| dist(a, b)).sum::<f64>();
                    count += p.len();
                }
                sum / count.max(1) as f64
            })
            .collect();
        Ok(Self { trajectories, head_losses })
    }

    /// Builds from decoded `N x 2T` head values in the normalized frame,
    /// mapping positions back through `transform`.
    pub fn from_heads(heads: &[Tensor], transform: &Transform, future: &[Vec<Point>]) -> Result<Self> {
        let trajectories = heads
            .iter()
            .map(|h| {
                (0..h.outer_len())
                    .map(|i| h.row(i).chunks(2).map(|c| transform.restore_point([c[0], c[1]])).collect())
                    .collect()
            })
            .collect();
        Self::new(trajectories, future)
    }

    pub fn n_heads(&self) -> usize {
        self.trajectories.len()
    }
}

/// Per-agent `(ADE, FDE)`, each minimized independently over the first `k`
/// heads.
pub fn per_agent_min_ade_fde(preds: &PredictionSet, future: &[Vec<Point>], k: usize) -> Result<Vec<(f64, f64)>> {
    if k == 0 || k > preds.n_heads() {
        return Err(TensorError::Contract(format!(
            "k = {k} must lie in 1..={}",
            preds.n_heads()
        )));
    }
    Ok(future
        .iter()
        .enumerate()
        .map(|(i, truth)| {
            let (mut ade, mut fde) = (f64::INFINITY, f64::INFINITY);
            for head in &preds.trajectories[..k] {
                let p = &head[i];
                let a = p.iter().zip(truth).map(|(&a, &b)| dist(a, b)).sum::<f64>() / truth.len() as f64;
                let f = dist(p[p.len() - 1], truth[truth.len() - 1]);
                ade = ade.min(a);
                fde = fde.min(f);
            }
            (ade, fde)
        })
        .collect())
}

/// Scene-level `(minADE_k, minFDE_k)`: per-agent minima averaged over
/// agents.
pub fn min_ade_fde(preds: &PredictionSet, future: &[Vec<Point>], k: usize) -> Result<(f64, f64)> {
    let rows = per_agent_min_ade_fde(preds, future, k)?;
    let n = rows.len() as f64;
    Ok((rows.iter().map(|r| r.0).sum::<f64>() / n, rows.iter().map(|r| r.1).sum::<f64>() / n))
}

/// Repeats each agent's last observed step over the horizon.
pub fn constant_velocity(scene: &Scene) -> PredictionSet {
    let trajectories = vec![(0..scene.n_agents())
        .map(|i| {
            let p = scene.last_observed(i);
            let r = scene.last_displacement(i);
            (1..=scene.t_pred())
                .map(|t| [p[0] + t as f64 * r[0], p[1] + t as f64 * r[1]])
                .collect()
        })
        .collect()];
    PredictionSet::new(trajectories, scene.future()).expect("aligned by construction")
}

/// Dataset-level metrics, averaged over every agent of every scene.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricAccumulator {
    scenes: usize,
    agents: usize,
    ade_sum: f64,
    fde_sum: f64,
}

impl MetricAccumulator {
    pub fn add_scene(&mut self, preds: &PredictionSet, future: &[Vec<Point>], k: usize) -> Result<()> {
        for (a, f) in per_agent_min_ade_fde(preds, future, k)? {
            self.ade_sum += a;
            self.fde_sum += f;
            self.agents += 1;
        }
        self.scenes += 1;
        Ok(())
    }

    pub fn finish(&self, dataset: &str, k: usize) -> MetricsRow {
        let n = self.agents.max(1) as f64;
        MetricsRow {
            dataset: dataset.to_string(),
            scene_count: self.scenes,
            min_ade: self.ade_sum / n,
            min_fde: self.fde_sum / n,
            k,
        }
    }
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub dataset: String,
    pub scene_count: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub k: usize,
}

/// CSV with header `dataset,scene_count,min_ade_k,min_fde_k,k`.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "scene_count", "min_ade_k", "min_fde_k", "k"])?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.scene_count.to_string(),
            r.min_ade.to_string(),
            r.min_fde.to_string(),
            r.k.to_string(),
        ])?;
    }
    w.flush()
}
