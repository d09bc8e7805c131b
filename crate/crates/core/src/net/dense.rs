use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::RandomSource;

/// One affine layer; `weights` is row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    #[inline]
    pub(crate) fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.n_in).zip(&self.biases))
        {
            let mut acc = *b;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *o = acc;
        }
    }
}

/// Dense feedforward network: ReLU on hidden layers, identity on the
/// single output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::arg("a network needs at least an input and an output layer"));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::arg("layer sizes must be positive"));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::arg("output layer must have exactly one unit"));
    }
    Ok(())
}

impl DenseNet {
    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    /// He-scaled uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn he_uniform(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let mut rng = RandomSource::with_stream(seed, 0x006e_6574);
        for layer in &mut net.layers {
            let bound = (6.0 / layer.n_in as f64).sqrt();
            for w in &mut layer.weights {
                *w = bound * (2.0 * rng.uniform() - 1.0);
            }
        }
        Ok(net)
    }

    /// Builds a net from per-layer row-major weights and biases.
    pub fn from_parts(layer_sizes: &[usize], weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::arg(format!(
                "expected {n_layers} weight and bias blocks, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
            if w.len() != n_in * n_out || b.len() != n_out {
                return Err(Error::arg(format!(
                    "layer {l}: expected {}x{} weights and {n_out} biases, got {} and {}",
                    n_out,
                    n_in,
                    w.len(),
                    b.len()
                )));
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("layer {l} has non-finite parameters")));
            }
            layers.push(Layer {
                n_in,
                n_out,
                weights: w,
                biases: b,
            });
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Network output for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut ws = Workspace::new(self);
        Ok(self.forward_ws(input, &mut ws))
    }

    /// Forward pass recording pre-activations in `ws`; input length must match.
    pub(crate) fn forward_ws(&self, input: &[f64], ws: &mut Workspace) -> f64 {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let src: &[f64] = if l == 0 { input } else { &prev[l] };
            layer.affine(src, &mut ws.pre[l]);
            let dst = &mut rest[0];
            if l == last {
                dst.copy_from_slice(&ws.pre[l]);
            } else {
                for (h, &z) in dst.iter_mut().zip(&ws.pre[l]) {
                    *h = if z > 0.0 { z } else { 0.0 };
                }
            }
        }
        ws.acts[self.layers.len()][0]
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub(crate) fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.biases.len() {
                return &mut l.biases[index];
            }
            index -= l.biases.len();
        }
        panic!("parameter index out of range");
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    /// `acts[0]` is unused (the input is borrowed); `acts[l + 1]` is layer l's output.
    pub acts: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    pub delta_next: Vec<f64>,
}

impl Workspace {
    pub fn new(net: &DenseNet) -> Self {
        let widest = *net.layer_sizes.iter().max().unwrap();
        let mut acts = vec![Vec::new()];
        acts.extend(net.layer_sizes[1..].iter().map(|&s| vec![0.0; s]));
        Self {
            acts,
            pre: net.layer_sizes[1..].iter().map(|&s| vec![0.0; s]).collect(),
            delta: vec![0.0; widest],
            delta_next: vec![0.0; widest],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-line re-implementation: nested loops over explicit matrices.
    fn reference_forward(net: &DenseNet, input: &[f64]) -> f64 {
        let mut h: Vec<f64> = input.to_vec();
        let n = net.layers().len();
        for (l, layer) in net.layers().iter().enumerate() {
            let mut z = vec![0.0; layer.n_out];
            for i in 0..layer.n_out {
                let mut s = 0.0;
                for j in 0..layer.n_in {
                    s += layer.weights[i * layer.n_in + j] * h[j];
                }
                z[i] = s + layer.biases[i];
            }
            h = if l + 1 < n {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z
            };
        }
        h[0]
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 5, 1]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 7.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_affine_layer() {
        let net = DenseNet::from_parts(&[1, 1], vec![vec![2.0]], vec![vec![1.0]]).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), 7.0);
        // no ReLU on the output
        assert_eq!(net.forward(&[-3.0]).unwrap(), -5.0);
    }

    #[test]
    fn random_net_matches_reference() {
        let net = DenseNet::he_uniform(&[1, 16, 1], 42).unwrap();
        let a = net.forward(&[0.5]).unwrap();
        let b = reference_forward(&net, &[0.5]);
        assert!((a - b).abs() < 1e-12);
        let deep = DenseNet::he_uniform(&[3, 8, 8, 1], 7).unwrap();
        let x = [0.3, -1.2, 2.0];
        assert!((deep.forward(&x).unwrap() - reference_forward(&deep, &x)).abs() < 1e-12);
        assert_eq!(deep.forward(&x).unwrap(), deep.forward(&x).unwrap());
    }

    #[test]
    fn shape_and_structure_errors() {
        let net = DenseNet::zeros(&[2, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { expected: 2, got: 1 })));
        assert!(DenseNet::zeros(&[2]).is_err());
        assert!(DenseNet::zeros(&[2, 3]).is_err());
        assert!(DenseNet::zeros(&[0, 1]).is_err());
        assert!(DenseNet::from_parts(&[1, 1], vec![vec![f64::NAN]], vec![vec![0.0]]).is_err());
        assert!(DenseNet::from_parts(&[2, 1], vec![vec![1.0]], vec![vec![0.0]]).is_err());
    }

    #[test]
    fn param_indexing_matches_flat_layout() {
        let mut net = DenseNet::he_uniform(&[2, 3, 1], 1).unwrap();
        let flat = net.params_flat();
        assert_eq!(flat.len(), net.num_params());
        assert_eq!(flat.len(), 2 * 3 + 3 + 3 + 1);
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(*net.param_mut(i), *v);
        }
    }
}
