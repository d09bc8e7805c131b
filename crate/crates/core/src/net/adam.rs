use super::dense::DenseNet;
use super::grad::Gradients;
use crate::error::{Error, Result};

/// Adaptive-moment (Adam) optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Gradients,
    second: Gradients,
}

impl OptimizerState {
    pub fn new(net: &DenseNet, learning_rate: f64) -> Result<Self> {
        Self::with_params(net, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_params(net: &DenseNet, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::arg(format!("learning rate must be positive, got {learning_rate}")));
        }
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(Error::arg("decay rates must lie in (0,1)"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::arg("epsilon must be positive"));
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.first
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.second
    }
}

/// Applies one bias-corrected Adam update to `net` in place.
pub fn optimizer_step(state: &mut OptimizerState, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
    if !grads.matches(net) || !state.first.matches(net) {
        return Err(Error::arg("gradient shapes do not match the network"));
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };

    for (((layer, g), m), v) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first.layers)
        .zip(&mut state.second.layers)
    {
        update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
        update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases);
    }
    Ok(())
}
