use serde::{Deserialize, Serialize};

use super::{ParamGrads, ParameterSet, Tensor};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    steps: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParameterSet<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|(_, _, v)| Tensor::zeros(v.rows(), v.cols())).collect();
        Self { config, first: zeros.clone(), second: zeros, steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &ParamGrads<T>) {
        self.steps += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let one = T::one();
        let t = self.steps as i32;
        let corr1 = one - b1.powi(t);
        let corr2 = one - b2.powi(t);
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for (id, g) in grads.iter() {
            let m = self.first[id.0].data_mut();
            let v = self.second[id.0].data_mut();
            let p = params.get_mut(id).data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                m[k] = b1 * m[k] + (one - b1) * gk;
                v[k] = b2 * v[k] + (one - b2) * gk * gk;
                let m_hat = m[k] / corr1;
                let v_hat = v[k] / corr2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut ParamGrads<T>, max_norm: T) -> T {
    let norm = grads.global_norm();
    if norm > max_norm && norm > T::zero() {
        grads.scale(max_norm / norm);
    }
    norm
}
