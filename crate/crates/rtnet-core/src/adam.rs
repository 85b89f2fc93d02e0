//! Adam optimizer with bias correction.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::network::{DenseNetwork, GradientSet};

/// Per-network Adam accumulators. Shapes mirror the network's parameters
/// in flat parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    /// Standard constants: β1=0.9, β2=0.999, ε=1e-8.
    pub fn new(net: &DenseNetwork) -> Self {
        let n = net.param_count();
        AdamState {
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update in place. `lr` must be positive; pass a pre-negated
    /// gradient for ascent.
    pub fn apply(&mut self, net: &mut DenseNetwork, grads: &GradientSet, lr: f64) -> Result<()> {
        if lr < 0.0 {
            return Err(CoreError::Usage("learning rate must be >= 0".into()));
        }
        if grads.param_count() != self.first.len() || net.param_count() != self.first.len() {
            return Err(CoreError::Usage(
                "gradient/parameter shapes do not match optimizer state".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        for idx in 0..self.first.len() {
            let g = grads.param(idx);
            let m = &mut self.first[idx];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            let v = &mut self.second[idx];
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *net.param_mut(idx) -= lr * m_hat / (libm::sqrt(v_hat) + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Activation;

    fn tiny_net() -> DenseNetwork {
        DenseNetwork::zeroed(&[2, 2], &[Activation::Linear]).unwrap()
    }

    fn ones_grad(net: &DenseNetwork) -> GradientSet {
        let mut g = GradientSet::zeros_like(net);
        for layer in g.layers_mut() {
            layer.d_weights.data_mut().fill(1.0);
            layer.d_bias.fill(1.0);
        }
        g
    }

    #[test]
    fn first_step_moves_params_by_lr() {
        let mut net = tiny_net();
        let grads = ones_grad(&net);
        let mut state = AdamState::new(&net);
        state.apply(&mut net, &grads, 1e-3).unwrap();
        // Bias-corrected m̂ = v̂ = 1 on the first step, so Δ ≈ -lr.
        for idx in 0..net.param_count() {
            let p = net.param(idx);
            assert!((p + 1e-3).abs() < 1e-9, "param {idx} moved to {p}");
        }
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut net = tiny_net();
        let grads = GradientSet::zeros_like(&net);
        let mut state = AdamState::new(&net);
        state.apply(&mut net, &grads, 1e-3).unwrap();
        for idx in 0..net.param_count() {
            assert_eq!(net.param(idx), 0.0);
        }
    }

    #[test]
    fn step_counter_advances() {
        let mut net = tiny_net();
        let grads = GradientSet::zeros_like(&net);
        let mut state = AdamState::new(&net);
        for expected in 1..=3u64 {
            state.apply(&mut net, &grads, 1e-3).unwrap();
            assert_eq!(state.step_count(), expected);
        }
    }
}
