//! Adaptive-moment optimizer with decoupled weight decay over named
//! trainable tensors. Parameters listed in `no_decay` skip the decay term.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::HashSet;

pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    params: Vec<(String, Tensor)>,
    no_decay: HashSet<String>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(
        params: Vec<(String, Tensor)>,
        lr: f64,
        weight_decay: f64,
        no_decay: impl IntoIterator<Item = String>,
    ) -> Self {
        let m = params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        let v = params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        AdamW {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            params,
            no_decay: no_decay.into_iter().collect(),
            m,
            v,
            t: 0,
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|(_, p)| p.numel()).sum()
    }

    /// Apply one update from the gradients accumulated on the parameters,
    /// then clear them. Parameters without a gradient are only decayed.
    pub fn step(&mut self) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, (name, p)) in self.params.iter().enumerate() {
            let grad = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in '{name}' at step {}",
                    self.t
                )));
            }
            let decay = if self.no_decay.contains(name) {
                0.0
            } else {
                self.weight_decay
            };
            let mut data = p.data();
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            for i in 0..data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + decay * data[i]);
            }
            p.set_data(&data);
            p.zero_grad();
        }
        Ok(())
    }

    pub fn zero_grad(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }
}
