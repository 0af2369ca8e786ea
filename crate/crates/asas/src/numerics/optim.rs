//! Adagrad with a configurable initial accumulator, plus global-norm
//! gradient clipping.

use std::collections::BTreeMap;

use crate::numerics::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdagradConfig {
    pub learning_rate: f64,
    pub initial_accumulator: f64,
    pub epsilon: f64,
}

impl Default for AdagradConfig {
    fn default() -> Self {
        AdagradConfig { learning_rate: 0.15, initial_accumulator: 0.1, epsilon: 1e-8 }
    }
}

/// Per-tensor squared-gradient accumulators, keyed by parameter name.
#[derive(Debug, Clone)]
pub struct OptimizerState<S> {
    pub config: AdagradConfig,
    accumulators: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(config: AdagradConfig) -> Self {
        OptimizerState { config, accumulators: BTreeMap::new() }
    }

    pub fn accumulator(&self, name: &str) -> Option<&Tensor<S>> {
        self.accumulators.get(name)
    }

    pub fn accumulators(&self) -> impl Iterator<Item = (&String, &Tensor<S>)> {
        self.accumulators.iter()
    }

    pub fn insert_accumulator(&mut self, name: String, acc: Tensor<S>) {
        self.accumulators.insert(name, acc);
    }

    /// acc += g^2; theta -= lr * g / (sqrt(acc) + eps).
    /// The accumulator is created lazily at `initial_accumulator`.
    pub fn step(&mut self, name: &str, param: &mut Tensor<S>, grad: &[S]) {
        assert_eq!(
            param.numel(),
            grad.len(),
            "adagrad shape mismatch for {name}: {} vs {}",
            param.numel(),
            grad.len()
        );
        let init = S::c(self.config.initial_accumulator);
        let lr = S::c(self.config.learning_rate);
        let eps = S::c(self.config.epsilon);
        let acc = self
            .accumulators
            .entry(name.to_string())
            .or_insert_with(|| Tensor::new(param.shape().to_vec(), vec![init; param.numel()]));
        assert_eq!(acc.numel(), grad.len(), "adagrad accumulator shape mismatch for {name}");
        for i in 0..grad.len() {
            let g = grad[i];
            let a = acc.data_mut();
            a[i] += g * g;
            let denom = a[i].sqrt() + eps;
            param.data_mut()[i] = param.data()[i] - lr * g / denom;
        }
    }
}

/// Scale gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(grads: &mut BTreeMap<String, Vec<S>>, max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for g in grads.values() {
        for v in g {
            let x = v.f64_value();
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = S::c(max_norm / norm);
        for g in grads.values_mut() {
            for v in g.iter_mut() {
                *v = *v * scale;
            }
        }
    }
    norm
}
