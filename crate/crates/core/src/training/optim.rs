use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, ParamGrads, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWHyper {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-5 }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState<T> {
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamWState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.weights().tensors().iter().map(|t| vec![T::zero(); t.data.len()]).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One AdamW update with decoupled weight decay and bias-corrected moments.
pub fn adamw_step<T: Real>(params: &mut ModelParams<T>, grads: &ParamGrads<T>, state: &mut AdamWState<T>, hyper: &AdamWHyper) {
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::lit(hyper.beta1);
    let b2 = T::lit(hyper.beta2);
    let one = T::one();
    let bc1 = T::lit(1.0 - hyper.beta1.powi(t));
    let bc2 = T::lit(1.0 - hyper.beta2.powi(t));
    let lr = T::lit(hyper.lr);
    let eps = T::lit(hyper.eps);
    let decay = T::lit(1.0 - hyper.lr * hyper.weight_decay);
    let grad_tensors = grads.weights.tensors();
    for (((p, g), m), v) in params
        .weights_mut()
        .tensors_mut()
        .into_iter()
        .zip(grad_tensors)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((p, &g), m), v) in p.data.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
            *p *= decay;
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Cosine annealing from `lr0` at epoch 0 to `lr_min` at `t_max`.
pub fn cosine_lr(epoch: usize, t_max: usize, lr0: f64, lr_min: f64) -> f64 {
    let e = epoch.min(t_max) as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * e / t_max as f64).cos())
}
