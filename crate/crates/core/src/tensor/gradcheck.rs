use super::{ParamStore, Result, Tape, Tensor, TensorError, Var};

/// Central-difference estimate of the gradient of a scalar function.
pub fn central_differences<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    check_step(h)?;
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(out)
}

fn check_step(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(TensorError::Contract(format!(
            "finite-difference step must be positive and finite, got {h}"
        )));
    }
    Ok(())
}

/// Compares the tape gradient of `f` at `x` with central differences.
///
/// `f` receives a fresh tape and the input as a leaf and must return a
/// scalar. Returns `max_i |analytic_i - numeric_i| / (|numeric_i| + 1e-8)`.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    check_step(h)?;
    let mut tape = Tape::new();
    let input = tape.leaf(x.clone());
    let loss = f(&mut tape, input)?;
    let grads = tape.backward(loss)?;
    let analytic = grads
        .wrt(input)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let numeric = central_differences(
        |probe| {
            let mut tape = Tape::new();
            let input = tape.leaf(probe.clone());
            let out = f(&mut tape, input)?;
            tape.value(out).item()
        },
        x,
        h,
    )?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Worst disagreement found by [`param_gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheckReport {
    /// `max |a - c| / max(|a|, |c|, floor)` over every parameter entry.
    pub max_relative: f64,
    pub max_absolute: f64,
    /// `name[index]` of the entry attaining `max_relative`.
    pub worst: String,
    pub entries: usize,
}

/// Compares tape gradients of a scalar `f(store)` with respect to every
/// parameter in `store` against central differences.
///
/// `f` builds a fresh forward pass on the tape it is given. Entries whose
/// gradients are both below `floor` in magnitude are compared absolutely.
pub fn param_gradient_check<F>(store: &ParamStore, f: F, h: f64, floor: f64) -> Result<ParamCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    check_step(h)?;
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let grads = tape.backward(loss)?;

    let mut report = ParamCheckReport {
        max_relative: 0.0,
        max_absolute: 0.0,
        worst: String::new(),
        entries: 0,
    };
    let mut probe = store.clone();
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let len = store.get(&name).map_or(0, Tensor::numel);
        for idx in 0..len {
            let orig = store.get(&name).expect("listed").data()[idx];
            let mut eval = |v: f64| -> Result<f64> {
                probe.get_mut(&name).expect("listed").data_mut()[idx] = v;
                let mut t = Tape::new();
                let out = f(&mut t, &probe)?;
                t.value(out).item()
            };
            let numeric = (eval(orig + h)? - eval(orig - h)?) / (2.0 * h);
            eval(orig)?;
            let analytic = grads.param(&name).map_or(0.0, |g| g.data()[idx]);
            let abs = (analytic - numeric).abs();
            let rel = abs / analytic.abs().max(numeric.abs()).max(floor);
            report.entries += 1;
            report.max_absolute = report.max_absolute.max(abs);
            if report.worst.is_empty() || rel > report.max_relative {
                report.max_relative = rel;
                report.worst = format!("{name}[{idx}]");
            }
        }
    }
    Ok(report)
}

pub(crate) fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, c)| (a - c).abs() / (c.abs() + 1e-8))
        .fold(0.0, f64::max)
}
