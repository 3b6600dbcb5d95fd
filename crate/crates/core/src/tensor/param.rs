use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

/// A named trainable tensor with its Adam moment accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub tensor: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

impl Parameter {
    pub fn new(tensor: Tensor) -> Self {
        let zeros = Tensor::zeros(tensor.shape());
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            tensor,
        }
    }
}

/// All parameters of a model, keyed by unique dotted path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Parameter>,
    /// Number of optimizer steps applied so far.
    step: u64,
}

impl ParamStore {
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(TensorError::Contract(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name, Parameter::new(tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.tensor)
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.tensor))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(|p| p.tensor.numel()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Parameters left untouched because no gradient was supplied.
    pub skipped: Vec<String>,
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<StepReport> {
        for (name, g) in grads {
            if let Some(p) = store.params.get(name) {
                if p.tensor.shape() != g.shape() {
                    return Err(TensorError::Shape {
                        op: "adam",
                        lhs: p.tensor.shape().to_vec(),
                        rhs: g.shape().to_vec(),
                    });
                }
            }
        }
        store.step += 1;
        let t = store.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let mut report = StepReport::default();
        for (name, p) in store.params.iter_mut() {
            let Some(g) = grads.get(name) else {
                warn!("no gradient for parameter `{name}`; skipped");
                report.skipped.push(name.clone());
                continue;
            };
            let Parameter {
                tensor,
                first_moment,
                second_moment,
            } = p;
            for (((w, m), v), &gi) in tensor
                .data_mut()
                .iter_mut()
                .zip(first_moment.data_mut())
                .zip(second_moment.data_mut())
                .zip(g.data())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: f64) -> ParamStore {
        let mut s = ParamStore::default();
        s.insert("p", Tensor::scalar(value)).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001; bias-corrected both 1 => step = lr / (1 + eps)
        let mut s = store_with(1.0);
        let grads = BTreeMap::from([("p".to_string(), Tensor::scalar(1.0))]);
        Adam::new(0.1).step(&mut s, &grads).unwrap();
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((s.get("p").unwrap().item().unwrap() - expected).abs() < 1e-15);
        assert!((s.get("p").unwrap().item().unwrap() - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = store_with(3.0);
        let grads = BTreeMap::from([("p".to_string(), Tensor::scalar(0.0))]);
        Adam::new(0.1).step(&mut s, &grads).unwrap();
        assert_eq!(s.get("p").unwrap().item().unwrap(), 3.0);
    }

    #[test]
    fn deterministic_from_same_state() {
        let mut a = store_with(0.3);
        let grads = BTreeMap::from([("p".to_string(), Tensor::scalar(-0.7))]);
        Adam::new(0.01).step(&mut a, &grads).unwrap();
        let mut b = a.clone();
        Adam::new(0.01).step(&mut a, &grads).unwrap();
        Adam::new(0.01).step(&mut b, &grads).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_gradient_is_skipped_with_record() {
        let mut s = store_with(1.0);
        s.insert("q", Tensor::scalar(2.0)).unwrap();
        let grads = BTreeMap::from([("p".to_string(), Tensor::scalar(1.0))]);
        let report = Adam::new(0.1).step(&mut s, &grads).unwrap();
        assert_eq!(report.skipped, vec!["q".to_string()]);
        assert_eq!(s.get("q").unwrap().item().unwrap(), 2.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = store_with(1.0);
        assert!(s.insert("p", Tensor::scalar(0.0)).is_err());
    }
}
