use std::collections::{BTreeMap, HashMap};

use super::primitive::{Primitive, ReduceAxis};
use super::{ParamStore, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Option<(Primitive, Vec<Var>)>,
    requires_grad: bool,
}

/// Wengert list of primitive applications for one forward pass.
///
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers and the reverse sweep is a single backwards walk.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<String, Var>,
    bind_order: Vec<String>,
}

/// Result of a reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    per_node: Vec<Option<Tensor>>,
    params: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.per_node.get(var.0).and_then(Option::as_ref)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    /// Gradient of every parameter bound on the tape, by name.
    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor> {
        self.params
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Option<(Primitive, Vec<Var>)>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, None, false)
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, None, true)
    }

    /// Binds a named parameter from `store`. Binding the same name twice
    /// returns the same handle.
    pub fn param(&mut self, name: &str, store: &ParamStore) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| TensorError::Contract(format!("unknown parameter `{name}`")))?
            .clone();
        let v = self.leaf(value);
        self.bind(name, v);
        Ok(v)
    }

    /// Makes subsequent `param(name, ..)` lookups resolve to `var`.
    pub fn override_param(&mut self, name: &str, var: Var) {
        if !self.bound.contains_key(name) {
            self.bind_order.push(name.to_string());
        }
        self.bound.insert(name.to_string(), var);
    }

    fn bind(&mut self, name: &str, v: Var) {
        self.bind_order.push(name.to_string());
        self.bound.insert(name.to_string(), v);
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let out = {
            let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            prim.forward(&values)?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(out, Some((prim, inputs.to_vec())), requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Div, &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let c = self.constant(Tensor::scalar(factor));
        self.mul(a, c)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let neg = self.scale(b, -1.0)?;
        self.add(a, neg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Primitive::Concat, parts)
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Gelu, &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Softplus, &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Softmax, &[a])
    }

    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        self.apply(Primitive::LayerNorm { eps }, &[a])
    }

    pub fn mean(&mut self, a: Var, axis: ReduceAxis) -> Result<Var> {
        self.apply(Primitive::Mean(axis), &[a])
    }

    pub fn sum(&mut self, a: Var, axis: ReduceAxis) -> Result<Var> {
        self.apply(Primitive::Sum(axis), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        self.apply(Primitive::GatherRows(indices), &[a])
    }

    pub fn scatter_add_rows(&mut self, a: Var, indices: Vec<usize>, rows: usize) -> Result<Var> {
        self.apply(Primitive::ScatterAddRows { indices, rows }, &[a])
    }

    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::L2Norm, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        self.apply(Primitive::Reshape(shape), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Transpose, &[a])
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every parameter bound on the tape appears in the result; parameters
    /// the loss does not depend on get a zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0].value;
        if !root.is_scalar_like() {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(root.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some((prim, inputs)) = &node.op else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let in_values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let local = prim.backward(&in_values, &node.value, &upstream);
            for (input, g) in inputs.iter().zip(local) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[idx] = Some(upstream);
        }

        let params = self
            .bind_order
            .iter()
            .map(|name| {
                let var = self.bound[name];
                let g = grads
                    .get(var.0)
                    .and_then(Option::clone)
                    .unwrap_or_else(|| Tensor::zeros(self.nodes[var.0].value.shape()));
                (name.clone(), g)
            })
            .collect();
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            per_node: grads,
            params,
        })
    }
}
