use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::network::{DenseNetwork, Gradients};
use crate::error::{Error, Result};

/// Hyperparameters of the adaptive-moment optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

/// Adam state for one [`DenseNetwork`]: bias-corrected first and second
/// moment estimates for every parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Moments>,
    second: Vec<Moments>,
}

impl Adam {
    pub fn new(net: &DenseNetwork, config: AdamConfig) -> Self {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| Moments {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect::<Vec<_>>()
        };
        Adam {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to `net` from `grads`.
    pub fn step(&mut self, net: &mut DenseNetwork, grads: &Gradients) -> Result<()> {
        self.step_scaled(net, grads, 1.0)
    }

    /// Like [`Adam::step`] with the learning rate multiplied by `rate_scale`.
    pub fn step_scaled(&mut self, net: &mut DenseNetwork, grads: &Gradients, rate_scale: f64) -> Result<()> {
        if grads.layers.len() != self.first.len() || net.layers().len() != self.first.len() {
            return Err(Error::shape(
                "optimizer layers",
                self.first.len(),
                format!("net {} / grads {}", net.layers().len(), grads.layers.len()),
            ));
        }
        for ((layer, grad), moments) in net.layers().iter().zip(&grads.layers).zip(&self.first) {
            if layer.weights.dim() != grad.weights.dim()
                || moments.weights.dim() != grad.weights.dim()
                || layer.bias.len() != grad.bias.len()
            {
                return Err(Error::shape(
                    "optimizer parameter",
                    format!("{:?}", moments.weights.dim()),
                    format!("{:?}", grad.weights.dim()),
                ));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let learning_rate = learning_rate * rate_scale;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        };

        for (((layer, grad), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&grad.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&grad.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
