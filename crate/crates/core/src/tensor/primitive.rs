use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::str::FromStr;

use super::{Result, Tensor, TensorError};

/// Axis selector for reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceAxis {
    /// Reduce every element to a scalar.
    All,
    /// Reduce the last axis, dropping it from the shape.
    Last,
}

/// Differentiable operations understood by the tape.
///
/// Binary element-wise ops (`Add`, `Mul`, `Div`) broadcast only the right
/// operand, in one of three ways: a one-element tensor, a tensor matching
/// the trailing axes of the left operand (row broadcast), or an `[m, 1]`
/// column against an `[m, n]` matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Mul,
    Div,
    /// Concatenate along the last axis.
    Concat,
    /// Exact GELU, `x * Phi(x)`.
    Gelu,
    Softplus,
    /// Softmax over the last axis.
    Softmax,
    /// Normalize the last axis to zero mean and unit variance, no affine terms.
    LayerNorm { eps: f64 },
    Mean(ReduceAxis),
    Sum(ReduceAxis),
    GatherRows(Vec<usize>),
    ScatterAddRows { indices: Vec<usize>, rows: usize },
    /// Euclidean norm over the last axis.
    L2Norm,
    Reshape(Vec<usize>),
    Transpose,
}

impl FromStr for Primitive {
    type Err = TensorError;

    /// Parses the argument-free primitives by name.
    fn from_str(name: &str) -> Result<Self> {
        Ok(match name {
            "matmul" => Primitive::MatMul,
            "add" => Primitive::Add,
            "multiply" => Primitive::Mul,
            "divide" => Primitive::Div,
            "concat-last-axis" => Primitive::Concat,
            "gelu" => Primitive::Gelu,
            "softplus" => Primitive::Softplus,
            "softmax-last-axis" => Primitive::Softmax,
            "layernorm-last-axis" => Primitive::LayerNorm { eps: 1e-10 },
            "mean-reduce" => Primitive::Mean(ReduceAxis::All),
            "sum-reduce" => Primitive::Sum(ReduceAxis::All),
            "l2-norm" => Primitive::L2Norm,
            "transpose" => Primitive::Transpose,
            other => return Err(TensorError::UnsupportedPrimitive(other.to_string())),
        })
    }
}

#[derive(Clone, Copy)]
enum Broadcast {
    Same,
    Scalar,
    Row(usize),
    Column(usize),
}

impl Broadcast {
    fn classify(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Result<Self> {
        let (ls, rs) = (lhs.shape(), rhs.shape());
        if ls == rs {
            Ok(Broadcast::Same)
        } else if rhs.numel() == 1 {
            Ok(Broadcast::Scalar)
        } else if rs.len() < ls.len() && rs == &ls[ls.len() - rs.len()..] {
            Ok(Broadcast::Row(rhs.numel()))
        } else if ls.len() == 2 && rs == [ls[0], 1] {
            Ok(Broadcast::Column(ls[1]))
        } else {
            Err(TensorError::Shape {
                op,
                lhs: ls.to_vec(),
                rhs: rs.to_vec(),
            })
        }
    }

    #[inline]
    fn index(self, flat: usize) -> usize {
        match self {
            Broadcast::Same => flat,
            Broadcast::Scalar => 0,
            Broadcast::Row(n) => flat % n,
            Broadcast::Column(cols) => flat / cols,
        }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn reduced_shape(shape: &[usize], axis: ReduceAxis) -> Vec<usize> {
    match axis {
        ReduceAxis::All => Vec::new(),
        ReduceAxis::Last => shape[..shape.len() - 1].to_vec(),
    }
}

fn require_rank(op: &'static str, t: &Tensor, min: usize) -> Result<()> {
    if t.rank() < min {
        return Err(TensorError::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![min],
        });
    }
    Ok(())
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Mul => "multiply",
            Primitive::Div => "divide",
            Primitive::Concat => "concat-last-axis",
            Primitive::Gelu => "gelu",
            Primitive::Softplus => "softplus",
            Primitive::Softmax => "softmax-last-axis",
            Primitive::LayerNorm { .. } => "layernorm-last-axis",
            Primitive::Mean(_) => "mean-reduce",
            Primitive::Sum(_) => "sum-reduce",
            Primitive::GatherRows(_) => "gather-rows",
            Primitive::ScatterAddRows { .. } => "scatter-add-rows",
            Primitive::L2Norm => "l2-norm",
            Primitive::Reshape(_) => "reshape",
            Primitive::Transpose => "transpose",
        }
    }

    fn check_arity(&self, n: usize) -> Result<()> {
        let ok = match self {
            Primitive::MatMul | Primitive::Add | Primitive::Mul | Primitive::Div => n == 2,
            Primitive::Concat => n >= 1,
            _ => n == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(TensorError::Contract(format!(
                "{} called with {n} inputs",
                self.name()
            )))
        }
    }

    pub fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        self.check_arity(inputs.len())?;
        let x = inputs[0];
        match self {
            Primitive::MatMul => matmul(x, inputs[1]),
            Primitive::Add => binary(self.name(), x, inputs[1], |a, b| a + b),
            Primitive::Mul => binary(self.name(), x, inputs[1], |a, b| a * b),
            Primitive::Div => binary(self.name(), x, inputs[1], |a, b| a / b),
            Primitive::Concat => concat(inputs),
            Primitive::Gelu => Ok(x.map(|v| v * std_normal_cdf(v))),
            Primitive::Softplus => Ok(x.map(softplus)),
            Primitive::Softmax => {
                require_rank(self.name(), x, 1)?;
                let cols = x.last_dim();
                let mut out = x.clone();
                if cols > 0 {
                    for row in out.data_mut().chunks_mut(cols) {
                        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let mut total = 0.0;
                        for v in row.iter_mut() {
                            *v = (*v - max).exp();
                            total += *v;
                        }
                        for v in row.iter_mut() {
                            *v /= total;
                        }
                    }
                }
                Ok(out)
            }
            Primitive::LayerNorm { eps } => {
                require_rank(self.name(), x, 1)?;
                let cols = x.last_dim();
                let mut out = x.clone();
                if cols > 0 {
                    for row in out.data_mut().chunks_mut(cols) {
                        let (mean, inv_std) = row_moments(row, *eps);
                        for v in row.iter_mut() {
                            *v = (*v - mean) * inv_std;
                        }
                    }
                }
                Ok(out)
            }
            Primitive::Mean(axis) | Primitive::Sum(axis) => {
                let mean = matches!(self, Primitive::Mean(_));
                match axis {
                    ReduceAxis::All => {
                        let s: f64 = x.data().iter().sum();
                        let n = x.numel().max(1) as f64;
                        Ok(Tensor::scalar(if mean { s / n } else { s }))
                    }
                    ReduceAxis::Last => {
                        require_rank(self.name(), x, 1)?;
                        let cols = x.last_dim();
                        let data = (0..x.outer_len())
                            .map(|r| {
                                let s: f64 = x.data()[r * cols..(r + 1) * cols].iter().sum();
                                if mean {
                                    s / cols.max(1) as f64
                                } else {
                                    s
                                }
                            })
                            .collect();
                        Tensor::new(reduced_shape(x.shape(), *axis), data)
                    }
                }
            }
            Primitive::GatherRows(indices) => {
                require_rank(self.name(), x, 1)?;
                let rows = x.shape()[0];
                let width = if rows == 0 { 0 } else { x.numel() / rows };
                let mut data = Vec::with_capacity(indices.len() * width);
                for &i in indices {
                    if i >= rows {
                        return Err(TensorError::Contract(format!(
                            "gather index {i} out of range for {rows} rows"
                        )));
                    }
                    data.extend_from_slice(&x.data()[i * width..(i + 1) * width]);
                }
                let mut shape = x.shape().to_vec();
                shape[0] = indices.len();
                Tensor::new(shape, data)
            }
            Primitive::ScatterAddRows { indices, rows } => {
                require_rank(self.name(), x, 1)?;
                if x.shape()[0] != indices.len() {
                    return Err(TensorError::Shape {
                        op: self.name(),
                        lhs: x.shape().to_vec(),
                        rhs: vec![indices.len()],
                    });
                }
                let width: usize = x.shape()[1..].iter().product();
                let mut shape = x.shape().to_vec();
                shape[0] = *rows;
                let mut out = Tensor::zeros(&shape);
                for (src, &dst) in indices.iter().enumerate() {
                    if dst >= *rows {
                        return Err(TensorError::Contract(format!(
                            "scatter index {dst} out of range for {rows} rows"
                        )));
                    }
                    let from = &x.data()[src * width..(src + 1) * width];
                    let to = &mut out.data_mut()[dst * width..(dst + 1) * width];
                    for (t, f) in to.iter_mut().zip(from) {
                        *t += f;
                    }
                }
                Ok(out)
            }
            Primitive::L2Norm => {
                require_rank(self.name(), x, 1)?;
                let cols = x.last_dim();
                let data = (0..x.outer_len())
                    .map(|r| {
                        x.data()[r * cols..(r + 1) * cols]
                            .iter()
                            .map(|v| v * v)
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                Tensor::new(reduced_shape(x.shape(), ReduceAxis::Last), data)
            }
            Primitive::Reshape(shape) => x.clone().reshaped(shape.clone()),
            Primitive::Transpose => {
                if x.rank() != 2 {
                    return Err(TensorError::Shape {
                        op: self.name(),
                        lhs: x.shape().to_vec(),
                        rhs: vec![2],
                    });
                }
                Ok(transpose(x))
            }
        }
    }

    /// Vector-Jacobian product: gradients w.r.t. each input given the
    /// upstream gradient `grad` of the output.
    pub fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let x = inputs[0];
        match self {
            Primitive::MatMul => {
                let b = inputs[1];
                vec![
                    matmul(grad, &transpose(b)).expect("matmul backward shape"),
                    matmul(&transpose(x), grad).expect("matmul backward shape"),
                ]
            }
            Primitive::Add => {
                let rhs = inputs[1];
                let bc = Broadcast::classify("add", x, rhs).expect("validated in forward");
                let mut g_rhs = Tensor::zeros(rhs.shape());
                for (i, g) in grad.data().iter().enumerate() {
                    g_rhs.data_mut()[bc.index(i)] += g;
                }
                vec![grad.clone(), g_rhs]
            }
            Primitive::Mul => {
                let rhs = inputs[1];
                let bc = Broadcast::classify("multiply", x, rhs).expect("validated in forward");
                let mut g_lhs = Tensor::zeros(x.shape());
                let mut g_rhs = Tensor::zeros(rhs.shape());
                for (i, g) in grad.data().iter().enumerate() {
                    let j = bc.index(i);
                    g_lhs.data_mut()[i] = g * rhs.data()[j];
                    g_rhs.data_mut()[j] += g * x.data()[i];
                }
                vec![g_lhs, g_rhs]
            }
            Primitive::Div => {
                let rhs = inputs[1];
                let bc = Broadcast::classify("divide", x, rhs).expect("validated in forward");
                let mut g_lhs = Tensor::zeros(x.shape());
                let mut g_rhs = Tensor::zeros(rhs.shape());
                for (i, g) in grad.data().iter().enumerate() {
                    let j = bc.index(i);
                    let b = rhs.data()[j];
                    g_lhs.data_mut()[i] = g / b;
                    g_rhs.data_mut()[j] -= g * x.data()[i] / (b * b);
                }
                vec![g_lhs, g_rhs]
            }
            Primitive::Concat => {
                let total = output.last_dim();
                let rows = output.outer_len();
                let mut offset = 0;
                inputs
                    .iter()
                    .map(|inp| {
                        let w = inp.last_dim();
                        let mut g = Tensor::zeros(inp.shape());
                        for r in 0..rows {
                            g.data_mut()[r * w..(r + 1) * w].copy_from_slice(
                                &grad.data()[r * total + offset..r * total + offset + w],
                            );
                        }
                        offset += w;
                        g
                    })
                    .collect()
            }
            Primitive::Gelu => vec![elementwise_grad(x, grad, |v| {
                std_normal_cdf(v) + v * std_normal_pdf(v)
            })],
            Primitive::Softplus => vec![elementwise_grad(x, grad, sigmoid)],
            Primitive::Softmax => {
                let cols = x.last_dim();
                let mut g = Tensor::zeros(x.shape());
                if cols > 0 {
                    for r in 0..x.outer_len() {
                        let s = &output.data()[r * cols..(r + 1) * cols];
                        let up = &grad.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = s.iter().zip(up).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            g.data_mut()[r * cols + c] = s[c] * (up[c] - dot);
                        }
                    }
                }
                vec![g]
            }
            Primitive::LayerNorm { eps } => {
                let cols = x.last_dim();
                let mut g = Tensor::zeros(x.shape());
                if cols > 0 {
                    let n = cols as f64;
                    for r in 0..x.outer_len() {
                        let (_, inv_std) = row_moments(&x.data()[r * cols..(r + 1) * cols], *eps);
                        let y = &output.data()[r * cols..(r + 1) * cols];
                        let up = &grad.data()[r * cols..(r + 1) * cols];
                        let mean_up = up.iter().sum::<f64>() / n;
                        let mean_up_y = up.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..cols {
                            g.data_mut()[r * cols + c] =
                                inv_std * (up[c] - mean_up - y[c] * mean_up_y);
                        }
                    }
                }
                vec![g]
            }
            Primitive::Mean(axis) | Primitive::Sum(axis) => {
                let mean = matches!(self, Primitive::Mean(_));
                let mut g = Tensor::zeros(x.shape());
                match axis {
                    ReduceAxis::All => {
                        let scale = if mean { 1.0 / x.numel().max(1) as f64 } else { 1.0 };
                        let up = grad.data()[0] * scale;
                        g.data_mut().iter_mut().for_each(|v| *v = up);
                    }
                    ReduceAxis::Last => {
                        let cols = x.last_dim();
                        let scale = if mean { 1.0 / cols.max(1) as f64 } else { 1.0 };
                        for (i, v) in g.data_mut().iter_mut().enumerate() {
                            *v = grad.data()[i / cols] * scale;
                        }
                    }
                }
                vec![g]
            }
            Primitive::GatherRows(indices) => {
                let rows = x.shape()[0];
                let back = Primitive::ScatterAddRows {
                    indices: indices.clone(),
                    rows,
                };
                vec![back.forward(&[grad]).expect("gather backward")]
            }
            Primitive::ScatterAddRows { indices, .. } => {
                let back = Primitive::GatherRows(indices.clone());
                vec![back.forward(&[grad]).expect("scatter backward")]
            }
            Primitive::L2Norm => {
                let cols = x.last_dim();
                let mut g = Tensor::zeros(x.shape());
                for (i, v) in g.data_mut().iter_mut().enumerate() {
                    let norm = output.data()[i / cols];
                    // subgradient 0 at the origin
                    *v = if norm > 0.0 {
                        grad.data()[i / cols] * x.data()[i] / norm
                    } else {
                        0.0
                    };
                }
                vec![g]
            }
            Primitive::Reshape(_) => vec![grad
                .clone()
                .reshaped(x.shape().to_vec())
                .expect("reshape backward")],
            Primitive::Transpose => vec![transpose(grad)],
        }
    }
}

fn row_moments(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

fn elementwise_grad(x: &Tensor, grad: &Tensor, deriv: impl Fn(f64) -> f64) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| g * deriv(v))
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

fn binary(op: &'static str, lhs: &Tensor, rhs: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let bc = Broadcast::classify(op, lhs, rhs)?;
    let data = lhs
        .data()
        .iter()
        .enumerate()
        .map(|(i, &a)| f(a, rhs.data()[bc.index(i)]))
        .collect();
    Tensor::new(lhs.shape().to_vec(), data)
}

fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(TensorError::Shape {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

fn transpose(x: &Tensor) -> Tensor {
    let (r, c) = (x.shape()[0], x.shape()[1]);
    let mut data = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            data[j * r + i] = x.data()[i * c + j];
        }
    }
    Tensor::new(vec![c, r], data).expect("transpose shape")
}

fn concat(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs[0];
    require_rank("concat-last-axis", first, 1)?;
    let lead = &first.shape()[..first.rank() - 1];
    for t in &inputs[1..] {
        if t.rank() != first.rank() || &t.shape()[..t.rank() - 1] != lead {
            return Err(TensorError::Shape {
                op: "concat-last-axis",
                lhs: first.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
    }
    let rows: usize = lead.iter().product();
    let total: usize = inputs.iter().map(|t| t.last_dim()).sum();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for t in inputs {
            let w = t.last_dim();
            data.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Tensor::new(shape, data)
}
