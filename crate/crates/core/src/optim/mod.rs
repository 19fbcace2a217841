//! AdamW and the deterministic training loop.

mod pipeline;
mod train;

pub use pipeline::{
    conform_scene, embed_dataset_eval, prepare_eval_inputs, prepare_training_inputs,
    EvalEmbeddings,
};
pub use train::{train, DataSource, StepMetrics, TrainConfig, TrainOutput};

use crate::error::{Error, Result};

/// AdamW optimizer state over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Number of trailing slots exempt from weight decay (the τ slot).
    pub wd_exempt_tail: usize,
}

impl AdamWState {
    /// Reference hyperparameters: lr 1e-4, weight decay 0.01.
    pub fn with_defaults(n_params: usize) -> Self {
        AdamWState::new(n_params, 1e-4, 0.01)
    }

    pub fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        AdamWState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            wd_exempt_tail: 0,
        }
    }
}

/// One AdamW update: bias-corrected Adam step plus decoupled weight decay
/// θ ← θ − lr·wd·θ on the pre-update parameters.
pub fn adamw_step(state: &mut AdamWState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::LengthMismatch {
            expected: state.m.len(),
            got: if params.len() != state.m.len() {
                params.len()
            } else {
                grads.len()
            },
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let decay_until = params.len() - state.wd_exempt_tail.min(params.len());

    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        let old = params[i];
        let mut update = state.lr * m_hat / (v_hat.sqrt() + state.eps);
        if i < decay_until {
            update += state.lr * state.weight_decay * old;
        }
        params[i] = old - update;
    }
    Ok(())
}
