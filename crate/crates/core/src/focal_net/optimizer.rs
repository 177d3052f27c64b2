//! Adaptive-moment optimizer with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One moment state per tensor; all tensors share the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    states: Vec<MomentState>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, tensor_sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            states: tensor_sizes
                .iter()
                .map(|&n| MomentState {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                })
                .collect(),
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn state(&self, tensor: usize) -> &MomentState {
        &self.states[tensor]
    }

    pub fn state_mut(&mut self, tensor: usize) -> &mut MomentState {
        &mut self.states[tensor]
    }

    /// Starts a new step; bias corrections use the incremented counter.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Updates the moments of `tensor` and returns the parameter decrement
    /// `group_scale * (base_lr * (wd * theta + m_hat / (sqrt(v_hat) + eps)))`.
    pub fn compute_update(
        &mut self,
        tensor: usize,
        params: &[f64],
        grads: &[f64],
        base_lr: f64,
        group_scale: f64,
    ) -> Result<Vec<f64>> {
        if self.step == 0 {
            return Err(Error::State("compute_update before begin_step".into()));
        }
        let st = &mut self.states[tensor];
        if params.len() != st.m.len() || grads.len() != st.m.len() {
            return Err(Error::Dimension(format!(
                "tensor {tensor}: {} params, {} grads, state of {}",
                params.len(),
                grads.len(),
                st.m.len()
            )));
        }
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let mut out = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let g = grads[i];
            st.m[i] = c.beta1 * st.m[i] + (1.0 - c.beta1) * g;
            st.v[i] = c.beta2 * st.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = st.m[i] / bc1;
            let v_hat = st.v[i] / bc2;
            let dir = c.weight_decay * params[i] + m_hat / (v_hat.sqrt() + c.epsilon);
            out.push(group_scale * (base_lr * dir));
        }
        Ok(out)
    }

    pub fn apply(&mut self, tensor: usize, params: &mut [f64], grads: &[f64], base_lr: f64, group_scale: f64) -> Result<()> {
        let delta = self.compute_update(tensor, params, grads, base_lr, group_scale)?;
        for (p, d) in params.iter_mut().zip(delta) {
            *p -= d;
        }
        Ok(())
    }
}
