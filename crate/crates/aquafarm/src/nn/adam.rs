//! Adam optimizer and the training learning-rate schedule.

use super::mlp::{GradBuffer, Mlp};

/// First/second moment accumulators per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        let n = net.n_params();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(net: &mut Mlp, grads: &GradBuffer, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for ((param, grad), (m, v)) in net
        .params_mut()
        .zip(grads.params())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * grad;
        *v = state.beta2 * *v + (1.0 - state.beta2) * grad * grad;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *param -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}

/// Halving schedule `lr0 · (1/2)^⌊e/1000⌋` with `lr0 = 5e−3`.
pub fn lr_schedule(epoch: usize) -> f64 {
    5e-3 * 0.5f64.powi((epoch / 1000) as i32)
}
