//! Gradient-descent steppers over a [`ParamStore`].

use std::collections::BTreeMap;

use super::store::ParamStore;
use super::{TensorError, TensorResult};

/// Plain SGD: `p -= lr * g` for every parameter, then clears the grads.
/// Errors if any parameter is missing its gradient.
pub fn sgd_step(store: &mut ParamStore, lr: f64) -> TensorResult<()> {
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in &names {
        let t = store.get(name)?;
        if t.grad.is_none() {
            return Err(TensorError::MissingGrad { name: name.clone() });
        }
    }
    for name in &names {
        let t = store.get_mut(name)?;
        let grad = t.grad.take().expect("checked above");
        for (p, g) in t.data.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
    }
    Ok(())
}

/// Adam with bias correction. First and second moments live here, keyed by
/// parameter name, so one state object follows one store through training.
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    /// Per-parameter learning-rate multiplier (default 1).
    lr_scale: BTreeMap<String, f64>,
}

impl AdamState {
    /// β₁ = 0.9, β₂ = 0.99, ε = 1e-8.
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            lr_scale: BTreeMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Scales the effective learning rate of one parameter.
    pub fn set_lr_scale(&mut self, name: &str, scale: f64) {
        self.lr_scale.insert(name.to_string(), scale);
    }

    /// Marks parameters as starting from a pretrained initialization: they
    /// are fine-tuned at a tenth of the base learning rate.
    pub fn mark_pretrained(&mut self, names: &[&str]) {
        for name in names {
            self.set_lr_scale(name, 0.1);
        }
    }

    /// One update over every parameter in the store. Consumes and clears the
    /// accumulated gradients; a parameter without a gradient is an error
    /// naming that parameter.
    pub fn step(&mut self, store: &mut ParamStore) -> TensorResult<()> {
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for name in &names {
            if store.get(name)?.grad.is_none() {
                return Err(TensorError::MissingGrad { name: name.clone() });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for name in &names {
            let tensor = store.get_mut(name)?;
            let grad = tensor.grad.take().expect("checked above");
            let n = tensor.data.len();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let lr = self.lr * self.lr_scale.get(name).copied().unwrap_or(1.0);
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                tensor.data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
