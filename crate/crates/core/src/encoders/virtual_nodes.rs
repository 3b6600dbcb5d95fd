use serde::{Deserialize, Serialize};

use crate::nn::{self, Aggregator};
use crate::tensor::{ParamStore, Result, RngStream, Tape, Tensor, TensorError, Var};

const BASE: &str = "virtual.base";
const R2V: &str = "virtual.r2v";
const V2R: &str = "virtual.v2r";

/// Learnable hub embeddings with optional train-time jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualNodeBank {
    pub n_virtual: usize,
    pub perturb_std: f64,
}

/// `rows` mutually orthogonal unit vectors of length `cols`, obtained by
/// Gram-Schmidt on Gaussian draws.
pub fn orthogonal_rows(rng: &mut RngStream, rows: usize, cols: usize) -> Result<Tensor> {
    if rows > cols {
        return Err(TensorError::Contract(format!(
            "cannot place {rows} orthogonal vectors in dimension {cols}"
        )));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
        // two passes keep the result orthogonal to machine precision
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Tensor::from_rows(&basis)
}

pub fn init_virtual_graph(
    store: &mut ParamStore,
    rng: &mut RngStream,
    bank: &VirtualNodeBank,
    dim: usize,
) -> Result<()> {
    if bank.n_virtual == 0 || !(bank.perturb_std >= 0.0) {
        return Err(TensorError::Contract(format!("invalid virtual node bank {bank:?}")));
    }
    store.insert(BASE, orthogonal_rows(rng, bank.n_virtual, dim)?)?;
    nn::init_attention(store, rng, &format!("{R2V}.attn"), dim)?;
    nn::init_mlp(store, rng, &format!("{R2V}.update"), [2 * dim, dim, dim])?;
    nn::init_attention(store, rng, &format!("{V2R}.attn"), dim)?;
    nn::init_mlp(store, rng, &format!("{V2R}.update"), [2 * dim, dim, dim])?;
    nn::init_norm(store, &format!("{V2R}.norm"), dim)
}

/// Base embeddings, plus Gaussian noise of std `perturb_std` in train mode.
pub fn init_virtual_nodes(
    tape: &mut Tape,
    store: &ParamStore,
    bank: &VirtualNodeBank,
    rng: &mut RngStream,
    train: bool,
) -> Result<Var> {
    let base = tape.param(BASE, store)?;
    if !train || bank.perturb_std == 0.0 {
        return Ok(base);
    }
    let shape = tape.value(base).shape().to_vec();
    let data = (0..tape.value(base).numel()).map(|_| bank.perturb_std * rng.normal()).collect();
    let noise = tape.constant(Tensor::new(shape, data)?);
    tape.add(base, noise)
}

/// Each hub summarizes all real nodes, then takes a residual MLP step over
/// `[hub; summary]`.
pub fn real_to_virtual(
    tape: &mut Tape,
    store: &ParamStore,
    hubs: Var,
    nodes: Var,
    aggregator: Aggregator,
) -> Result<Var> {
    let summary = nn::attend(tape, store, &format!("{R2V}.attn"), hubs, nodes, None, aggregator)?;
    let joined = tape.concat(&[hubs, summary])?;
    let update = nn::mlp(tape, store, &format!("{R2V}.update"), joined)?;
    tape.add(hubs, update)
}

/// Each real node reads from all hubs, takes a residual MLP step, then
/// layer normalization followed by GELU.
pub fn virtual_to_real(
    tape: &mut Tape,
    store: &ParamStore,
    nodes: Var,
    hubs: Var,
    aggregator: Aggregator,
    eps: f64,
) -> Result<Var> {
    let message = nn::attend(tape, store, &format!("{V2R}.attn"), nodes, hubs, None, aggregator)?;
    let joined = tape.concat(&[nodes, message])?;
    let update = nn::mlp(tape, store, &format!("{V2R}.update"), joined)?;
    let updated = tape.add(nodes, update)?;
    let normed = nn::norm(tape, store, &format!("{V2R}.norm"), updated, eps)?;
    tape.gelu(normed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::testing::{permute_rows, random_matrix};
    use crate::tensor::{param_gradient_check, ReduceAxis};

    const EPS: f64 = 1e-5;

    fn setup(v: usize, d: usize) -> (ParamStore, VirtualNodeBank) {
        let bank = VirtualNodeBank { n_virtual: v, perturb_std: 0.1 };
        let mut s = ParamStore::default();
        init_virtual_graph(&mut s, &mut RngStream::new(21), &bank, d).unwrap();
        (s, bank)
    }

    fn r2v(s: &ParamStore, hubs: &Tensor, x: &Tensor, agg: Aggregator) -> Tensor {
        let mut tape = Tape::new();
        let h = tape.constant(hubs.clone());
        let n = tape.constant(x.clone());
        let out = real_to_virtual(&mut tape, s, h, n, agg).unwrap();
        tape.value(out).clone()
    }

    fn v2r(s: &ParamStore, x: &Tensor, hubs: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let h = tape.constant(hubs.clone());
        let n = tape.constant(x.clone());
        let out = virtual_to_real(&mut tape, s, n, h, Aggregator::Attention, EPS).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn base_embeddings_are_orthogonal() {
        let (s, _) = setup(4, 6);
        let b = s.get(BASE).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = b.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12, "gram[{i}][{j}] = {dot}");
            }
        }
        assert!(orthogonal_rows(&mut RngStream::new(0), 3, 2).is_err());
    }

    #[test]
    fn eval_mode_returns_base_and_train_mode_is_seeded() {
        let (s, bank) = setup(2, 4);
        let draw = |train: bool, seed: u64| {
            let mut tape = Tape::new();
            let v = init_virtual_nodes(&mut tape, &s, &bank, &mut RngStream::new(seed), train).unwrap();
            tape.value(v).clone()
        };
        assert_eq!(&draw(false, 1), s.get(BASE).unwrap());
        assert_eq!(draw(true, 1), draw(true, 1));
        assert_ne!(draw(true, 1), draw(true, 2));
        assert_ne!(&draw(true, 1), s.get(BASE).unwrap());
    }

    #[test]
    fn single_real_node_gets_full_weight() {
        let (s, _) = setup(2, 4);
        let hubs = s.get(BASE).unwrap().clone();
        let x = random_matrix(&mut RngStream::new(4), 1, 4);
        let out = r2v(&s, &hubs, &x, Aggregator::Attention);
        let mut tape = Tape::new();
        let h = tape.constant(hubs.clone());
        let n = tape.constant(Tensor::from_rows(&[x.row(0).to_vec(), x.row(0).to_vec()]).unwrap());
        let val = nn::linear(&mut tape, &s, "virtual.r2v.attn.value", n).unwrap();
        let joined = tape.concat(&[h, val]).unwrap();
        let up = nn::mlp(&mut tape, &s, "virtual.r2v.update", joined).unwrap();
        let expect = tape.add(h, up).unwrap();
        assert!(out.max_abs_diff(tape.value(expect)) < 1e-12);
    }

    #[test]
    fn identical_real_nodes_give_uniform_attention() {
        let (s, _) = setup(2, 4);
        let hubs = s.get(BASE).unwrap().clone();
        let row = vec![0.2, -0.4, 1.1, 0.5];
        let x = Tensor::from_rows(&[row.clone(), row.clone(), row]).unwrap();
        let att = r2v(&s, &hubs, &x, Aggregator::Attention);
        let mean = r2v(&s, &hubs, &x, Aggregator::Mean);
        assert!(att.max_abs_diff(&mean) < 1e-12);
    }

    #[test]
    fn real_to_virtual_ignores_node_order() {
        let (s, _) = setup(3, 5);
        let mut rng = RngStream::new(8);
        let hubs = random_matrix(&mut rng, 3, 5);
        let x = random_matrix(&mut rng, 4, 5);
        let a = r2v(&s, &hubs, &x, Aggregator::Attention);
        let b = r2v(&s, &hubs, &permute_rows(&x, &[3, 1, 0, 2]), Aggregator::Attention);
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn virtual_to_real_ignores_hub_order_and_single_hub_is_shared() {
        let (s, _) = setup(3, 5);
        let mut rng = RngStream::new(9);
        let hubs = random_matrix(&mut rng, 3, 5);
        let x = random_matrix(&mut rng, 4, 5);
        let a = v2r(&s, &x, &hubs);
        let b = v2r(&s, &x, &permute_rows(&hubs, &[2, 0, 1]));
        assert!(a.max_abs_diff(&b) < 1e-12);

        // with one hub the message is the same value row for every agent
        let one = permute_rows(&hubs, &[1]);
        let mut tape = Tape::new();
        let n = tape.constant(x.clone());
        let h = tape.constant(one);
        let msg = nn::attend(&mut tape, &s, "virtual.v2r.attn", n, h, None, Aggregator::Attention).unwrap();
        let m = tape.value(msg);
        for i in 1..4 {
            assert_eq!(m.row(0), m.row(i));
        }
    }

    #[test]
    fn two_stage_pass_gradient_check() {
        let (s, bank) = setup(2, 4);
        let x = random_matrix(&mut RngStream::new(13), 3, 4);
        let report = param_gradient_check(
            &s,
            |t, s| {
                let n = t.constant(x.clone());
                let h = init_virtual_nodes(t, s, &bank, &mut RngStream::new(0), false)?;
                let h = real_to_virtual(t, s, h, n, Aggregator::Attention)?;
                let out = virtual_to_real(t, s, n, h, Aggregator::Attention, EPS)?;
                let sq = t.mul(out, out)?;
                t.mean(sq, ReduceAxis::All)
            },
            1e-6,
            1e-6,
        )
        .unwrap();
        assert!(report.max_relative < 1e-4, "{report:?}");
    }
}
