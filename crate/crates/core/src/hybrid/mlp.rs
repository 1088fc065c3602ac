//! Small feed-forward network with tanh hidden layers, a linear output
//! layer, and hand-derived reverse-mode gradients.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Feed-forward multilayer perceptron. Hidden layers apply `tanh`; the
/// output layer is linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Per-layer values cached by a forward pass, for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer activations, starting with the input itself.
    pub activations: Vec<DVector<f64>>,
}

/// Gradients of a scalar loss with respect to every parameter and to the
/// network input.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub d_weights: Vec<DMatrix<f64>>,
    pub d_biases: Vec<DVector<f64>>,
    pub d_input: DVector<f64>,
}

impl MlpGradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            d_weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            d_biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
            d_input: DVector::zeros(net.layer_sizes[0]),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGradients) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += b;
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            *a += b;
        }
        self.d_input += &other.d_input;
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.d_weights {
            *w *= factor;
        }
        for b in &mut self.d_biases {
            *b *= factor;
        }
        self.d_input *= factor;
    }
}

impl Mlp {
    /// Network with hidden layers initialized uniformly in the
    /// Xavier/Glorot range and the final layer zeroed, so the initial map
    /// is identically zero. Deterministic in the seed.
    pub fn new_zero_output(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::DimensionMismatch(
                "network needs at least an input and an output layer".into(),
            ));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::DimensionMismatch("zero-width layer".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n_layers = layer_sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let last = l + 1 == n_layers;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = DMatrix::from_fn(fan_out, fan_in, |_, _| {
                if last {
                    0.0
                } else {
                    rng.random_range(-limit..limit)
                }
            });
            weights.push(w);
            biases.push(DVector::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn input_len(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    /// Check the stored matrices against `layer_sizes`.
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2
            || self.weights.len() != self.layer_sizes.len() - 1
            || self.biases.len() != self.weights.len()
        {
            return Err(Error::DimensionMismatch("layer bookkeeping is inconsistent".into()));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.nrows() != self.layer_sizes[l + 1]
                || w.ncols() != self.layer_sizes[l]
                || b.len() != w.nrows()
            {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} is {}x{} with bias {}",
                    w.nrows(),
                    w.ncols(),
                    b.len()
                )));
            }
        }
        Ok(())
    }
}

/// Forward pass.
pub fn mlp_forward(net: &Mlp, input: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(mlp_forward_cached(net, input)?
        .activations
        .last()
        .expect("cache holds the output")
        .clone())
}

/// Forward pass retaining per-layer activations for [`mlp_gradients`].
pub fn mlp_forward_cached(net: &Mlp, input: &DVector<f64>) -> Result<ForwardCache> {
    if input.len() != net.input_len() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} entries, network takes {}",
            input.len(),
            net.input_len()
        )));
    }
    let n_layers = net.weights.len();
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(input.clone());
    for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        let mut z = w * activations.last().expect("nonempty") + b;
        if l + 1 < n_layers {
            z.apply(|v| *v = v.tanh());
        }
        activations.push(z);
    }
    Ok(ForwardCache { activations })
}

/// Reverse-mode gradients of `upstream . output` with respect to all
/// weights, biases and the input, given the cached forward pass.
pub fn mlp_gradients(net: &Mlp, upstream: &DVector<f64>, cache: &ForwardCache) -> Result<MlpGradients> {
    if upstream.len() != net.output_len() {
        return Err(Error::DimensionMismatch(format!(
            "upstream gradient has {} entries, output has {}",
            upstream.len(),
            net.output_len()
        )));
    }
    if cache.activations.len() != net.weights.len() + 1 {
        return Err(Error::DimensionMismatch("cache does not match the network".into()));
    }

    let n_layers = net.weights.len();
    let mut d_weights = vec![DMatrix::zeros(0, 0); n_layers];
    let mut d_biases = vec![DVector::zeros(0); n_layers];

    // Linear output layer: delta starts as the upstream gradient.
    let mut delta = upstream.clone();
    for l in (0..n_layers).rev() {
        let input_act = &cache.activations[l];
        d_weights[l] = &delta * input_act.transpose();
        d_biases[l] = delta.clone();
        let mut back = net.weights[l].transpose() * &delta;
        if l > 0 {
            // The activation entering layer l came through a tanh.
            for (g, a) in back.iter_mut().zip(input_act.iter()) {
                *g *= 1.0 - a * a;
            }
        }
        delta = back;
    }

    Ok(MlpGradients {
        d_weights,
        d_biases,
        d_input: delta,
    })
}
