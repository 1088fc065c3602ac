//! ADAM optimizer state for the hybrid networks: adaptive moment
//! estimation with bias correction, full-batch.

use nalgebra::{DMatrix, DVector};

use super::mlp::{Mlp, MlpGradients};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_weights: Vec<DMatrix<f64>>,
    v_weights: Vec<DMatrix<f64>>,
    m_biases: Vec<DVector<f64>>,
    v_biases: Vec<DVector<f64>>,
    step: usize,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self {
            m_weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            v_weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            m_biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
            v_biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
            step: 0,
        }
    }

    /// One ADAM update of the network in place.
    pub fn update(&mut self, net: &mut Mlp, grads: &MlpGradients, settings: &AdamSettings) {
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - settings.beta1.powf(t);
        let bias2 = 1.0 - settings.beta2.powf(t);

        for l in 0..net.weights.len() {
            let g = &grads.d_weights[l];
            let m = &mut self.m_weights[l];
            let v = &mut self.v_weights[l];
            for (idx, gv) in g.iter().enumerate() {
                m[idx] = settings.beta1 * m[idx] + (1.0 - settings.beta1) * gv;
                v[idx] = settings.beta2 * v[idx] + (1.0 - settings.beta2) * gv * gv;
                let m_hat = m[idx] / bias1;
                let v_hat = v[idx] / bias2;
                net.weights[l][idx] -= settings.learning_rate * m_hat / (v_hat.sqrt() + settings.epsilon);
            }
            let g = &grads.d_biases[l];
            let m = &mut self.m_biases[l];
            let v = &mut self.v_biases[l];
            for (idx, gv) in g.iter().enumerate() {
                m[idx] = settings.beta1 * m[idx] + (1.0 - settings.beta1) * gv;
                v[idx] = settings.beta2 * v[idx] + (1.0 - settings.beta2) * gv * gv;
                let m_hat = m[idx] / bias1;
                let v_hat = v[idx] / bias2;
                net.biases[l][idx] -= settings.learning_rate * m_hat / (v_hat.sqrt() + settings.epsilon);
            }
        }
    }
}
