//! Toy transformer MLP stack: configuration, weights, activation-mask
//! semantics, and the dense reference forward pass.
//!
//! A *neuron* is row `i` of the FC1 matrix paired with column `i` of the FC2
//! matrix (and row `i` of the gate matrix for ReGLU). The activation mask of
//! a layer is the exact set of neurons whose post-gate value is strictly
//! positive; neurons outside the mask provably contribute nothing to the
//! layer output.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;

/// Gating nonlinearity of the MLP block.
///
/// Only activations with exact sparsity are supported: a neuron is active iff
/// its gate value is strictly positive, with no thresholding involved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    ReLU,
    ReGLU,
}

/// Static shape of the MLP stack. Weights are 32-bit floats throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub num_layers: usize,
    /// Embedding dimension `d`: FC1 is `m x d`, FC2 is `d x m`.
    pub hidden_dim: usize,
    /// Intermediate dimension `m`: the number of neurons per layer.
    pub intermediate_dim: usize,
    pub activation: Activation,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.num_layers == 0 {
            return Err(Error::InvalidConfig("num_layers must be >= 1"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("hidden_dim must be >= 1"));
        }
        if self.intermediate_dim == 0 {
            return Err(Error::InvalidConfig("intermediate_dim must be >= 1"));
        }
        Ok(())
    }

    /// Total number of neurons across the stack.
    pub fn neuron_count(&self) -> usize {
        self.num_layers * self.intermediate_dim
    }
}

/// Dense row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, Error> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Fixed-order dot product; every matrix-vector path in the crate goes
/// through this so that results are reproducible bit for bit.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Weights of one MLP layer.
///
/// FC1 neuron `i` and FC2 neuron `i` are the same logical neuron: row `i` of
/// `fc1` and column `i` of `fc2`. Biases are optional and, when present, are
/// applied before the ReLU of the branch that decides the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    /// `m x d`; row `i` = neuron `i`.
    pub fc1: Matrix,
    /// `d x m`; column `i` = neuron `i`.
    pub fc2: Matrix,
    /// `m x d`, ReGLU only; row `i` gates neuron `i`.
    pub gate: Option<Matrix>,
    /// Length `m`, added to `fc1 * x` before the ReLU (ReLU models).
    pub fc1_bias: Option<Vec<f32>>,
    /// Length `m`, added to `gate * x` before the gate ReLU (ReGLU models).
    pub gate_bias: Option<Vec<f32>>,
}

impl LayerWeights {
    /// Bytes of weight data owned by a single neuron of this layer.
    pub fn neuron_bytes(&self) -> u64 {
        let d = self.fc1.cols() as u64;
        let mut floats = 2 * d; // fc1 row + fc2 column
        if self.gate.is_some() {
            floats += d;
        }
        if self.fc1_bias.is_some() {
            floats += 1;
        }
        if self.gate_bias.is_some() {
            floats += 1;
        }
        floats * 4
    }

    /// Total f32 parameter count of the layer.
    pub fn param_count(&self) -> u64 {
        let mut n = (self.fc1.rows() * self.fc1.cols() + self.fc2.rows() * self.fc2.cols()) as u64;
        if let Some(g) = &self.gate {
            n += (g.rows() * g.cols()) as u64;
        }
        if let Some(b) = &self.fc1_bias {
            n += b.len() as u64;
        }
        if let Some(b) = &self.gate_bias {
            n += b.len() as u64;
        }
        n
    }
}

/// Addresses one neuron: a row/column pair of one layer's weight matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> Self {
        NeuronId { layer, index }
    }

    /// Layer-major flat index over the whole stack.
    pub fn flat(&self, neurons_per_layer: usize) -> usize {
        self.layer * neurons_per_layer + self.index
    }

    pub fn from_flat(flat: usize, neurons_per_layer: usize) -> Self {
        NeuronId {
            layer: flat / neurons_per_layer,
            index: flat % neurons_per_layer,
        }
    }
}

/// The exact set of active neurons of one layer for one input, stored as
/// strictly ascending indices (the canonical order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationMask {
    layer: usize,
    active: Vec<usize>,
}

impl ActivationMask {
    /// Builds a mask, rejecting out-of-order or duplicate indices.
    pub fn new(layer: usize, active: Vec<usize>) -> Result<Self, Error> {
        if active.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::NotAscending);
        }
        Ok(ActivationMask { layer, active })
    }

    pub fn empty(layer: usize) -> Self {
        ActivationMask {
            layer,
            active: Vec::new(),
        }
    }

    pub fn full(layer: usize, m: usize) -> Self {
        ActivationMask {
            layer,
            active: (0..m).collect(),
        }
    }

    pub fn from_bools(layer: usize, active: &[bool]) -> Self {
        ActivationMask {
            layer,
            active: active
                .iter()
                .enumerate()
                .filter_map(|(i, &a)| a.then_some(i))
                .collect(),
        }
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn indices(&self) -> &[usize] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.active.binary_search(&index).is_ok()
    }

    /// Largest index plus one that this mask could address, for bound checks.
    pub fn max_index(&self) -> Option<usize> {
        self.active.last().copied()
    }
}

/// Per-input record of one full forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Output of the last layer.
    pub output: Vec<f32>,
    /// Input vector seen by each layer (`layer_inputs[0]` is the model input).
    pub layer_inputs: Vec<Vec<f32>>,
    /// True activation mask of each layer.
    pub masks: Vec<ActivationMask>,
}

/// An MLP stack with consistent layer shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<LayerWeights>,
}

impl Model {
    pub fn new(config: ModelConfig, layers: Vec<LayerWeights>) -> Result<Self, Error> {
        config.validate()?;
        if layers.len() != config.num_layers {
            return Err(Error::InvalidConfig("layer count does not match config"));
        }
        let (d, m) = (config.hidden_dim, config.intermediate_dim);
        for (l, layer) in layers.iter().enumerate() {
            check_shape(l, "fc1", &layer.fc1, (m, d))?;
            check_shape(l, "fc2", &layer.fc2, (d, m))?;
            match (config.activation, &layer.gate) {
                (Activation::ReGLU, Some(g)) => check_shape(l, "gate", g, (m, d))?,
                (Activation::ReGLU, None) => {
                    return Err(Error::InvalidConfig("ReGLU layer is missing its gate matrix"))
                }
                (Activation::ReLU, Some(_)) => {
                    return Err(Error::InvalidConfig("ReLU layer must not carry a gate matrix"))
                }
                (Activation::ReLU, None) => {}
            }
            if let Some(b) = &layer.fc1_bias {
                check_len(m, b)?;
            }
            if let Some(b) = &layer.gate_bias {
                check_len(m, b)?;
            }
        }
        Ok(Model { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &LayerWeights {
        &self.layers[l]
    }

    /// Total f32 parameter count.
    pub fn param_count(&self) -> u64 {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Total weight bytes of the stack.
    pub fn total_bytes(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| l.neuron_bytes() * self.config.intermediate_dim as u64)
            .sum()
    }

    /// Dense forward pass of one layer.
    pub fn forward_layer(&self, l: usize, x: &[f32]) -> Result<(Vec<f32>, ActivationMask), Error> {
        dense_mlp_forward(&self.layers[l], self.config.activation, l, x)
    }

    /// Dense forward pass through the whole stack; each layer consumes the
    /// previous layer's output.
    pub fn forward(&self, x: &[f32]) -> Result<(Vec<f32>, Vec<ActivationMask>), Error> {
        let trace = self.forward_trace(x)?;
        Ok((trace.output, trace.masks))
    }

    /// Like [`Model::forward`] but also keeps every layer's input vector.
    pub fn forward_trace(&self, x: &[f32]) -> Result<ForwardTrace, Error> {
        let mut layer_inputs = Vec::with_capacity(self.config.num_layers);
        let mut masks = Vec::with_capacity(self.config.num_layers);
        let mut cur = x.to_vec();
        for l in 0..self.config.num_layers {
            layer_inputs.push(cur.clone());
            let (y, mask) = self.forward_layer(l, &cur)?;
            masks.push(mask);
            cur = y;
        }
        Ok(ForwardTrace {
            output: cur,
            layer_inputs,
            masks,
        })
    }
}

fn check_shape(layer: usize, name: &'static str, mat: &Matrix, expected: (usize, usize)) -> Result<(), Error> {
    if mat.shape() != expected {
        return Err(Error::ShapeMismatch {
            layer,
            name,
            expected,
            actual: mat.shape(),
        });
    }
    Ok(())
}

fn check_len(expected: usize, v: &[f32]) -> Result<(), Error> {
    if v.len() != expected {
        return Err(Error::DimMismatch {
            expected,
            actual: v.len(),
        });
    }
    Ok(())
}

/// Dense reference forward pass of one MLP layer.
///
/// For ReLU: `h = relu(fc1 * x + b1)`, `y = fc2 * h`, mask = `{ i : h_i > 0 }`.
/// For ReGLU: `g = relu(gate * x + bg)`, `h = g (.) (fc1 * x + b1)`,
/// `y = fc2 * h`, mask = `{ i : g_i > 0 }` — the gate alone decides activity
/// because a zero gate annihilates the product.
///
/// The FC2 accumulation runs in ascending neuron order, which is the
/// determinism contract shared with the sparse operators.
pub fn dense_mlp_forward(
    layer: &LayerWeights,
    activation: Activation,
    layer_idx: usize,
    x: &[f32],
) -> Result<(Vec<f32>, ActivationMask), Error> {
    let (m, d) = layer.fc1.shape();
    if x.len() != d {
        return Err(Error::DimMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    check_shape(layer_idx, "fc2", &layer.fc2, (d, m))?;

    let mut h = vec![0.0f32; m];
    let mut active = Vec::new();
    match activation {
        Activation::ReLU => {
            for i in 0..m {
                let mut z = dot(layer.fc1.row(i), x);
                if let Some(b) = &layer.fc1_bias {
                    z += b[i];
                }
                if z > 0.0 {
                    h[i] = z;
                    active.push(i);
                }
            }
        }
        Activation::ReGLU => {
            let gate = layer
                .gate
                .as_ref()
                .ok_or(Error::InvalidConfig("ReGLU layer is missing its gate matrix"))?;
            check_shape(layer_idx, "gate", gate, (m, d))?;
            for i in 0..m {
                let mut g = dot(gate.row(i), x);
                if let Some(b) = &layer.gate_bias {
                    g += b[i];
                }
                if g > 0.0 {
                    let mut z = dot(layer.fc1.row(i), x);
                    if let Some(b) = &layer.fc1_bias {
                        z += b[i];
                    }
                    h[i] = g * z;
                    active.push(i);
                }
            }
        }
    }

    let mut y = vec![0.0f32; d];
    for (i, &hi) in h.iter().enumerate() {
        if hi != 0.0 {
            let col_base = i;
            for (j, yj) in y.iter_mut().enumerate() {
                *yj += hi * layer.fc2.data[j * m + col_base];
            }
        }
    }

    Ok((y, ActivationMask { layer: layer_idx, active }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_layer(fc1: Matrix, fc2: Matrix) -> LayerWeights {
        LayerWeights {
            fc1,
            fc2,
            gate: None,
            fc1_bias: None,
            gate_bias: None,
        }
    }

    /// Straight-line re-implementation of the two matmuls, written before the
    /// main forward pass and kept independent of it.
    fn dense_oracle(layer: &LayerWeights, x: &[f32]) -> Vec<f32> {
        let (m, d) = layer.fc1.shape();
        let mut h = vec![0.0f32; m];
        for i in 0..m {
            let mut z = 0.0f32;
            for k in 0..d {
                z += layer.fc1.get(i, k) * x[k];
            }
            h[i] = if z > 0.0 { z } else { 0.0 };
        }
        let mut y = vec![0.0f32; d];
        for j in 0..d {
            for i in 0..m {
                y[j] += layer.fc2.get(j, i) * h[i];
            }
        }
        y
    }

    fn splitmix(state: &mut u64) -> f32 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        (z >> 40) as f32 / (1u64 << 24) as f32 - 0.5
    }

    fn random_matrix(rows: usize, cols: usize, seed: &mut u64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| splitmix(seed))
    }

    #[test]
    fn sign_pattern_forces_mask() {
        let fc1 = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        let fc2 = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let layer = relu_layer(fc1, fc2);
        let (y, mask) = dense_mlp_forward(&layer, Activation::ReLU, 0, &[1.0, 1.0]).unwrap();
        assert_eq!(mask.indices(), &[0]);
        assert_eq!(y, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_input_zero_everything() {
        let mut seed = 7;
        let layer = relu_layer(random_matrix(8, 4, &mut seed), random_matrix(4, 8, &mut seed));
        let (y, mask) = dense_mlp_forward(&layer, Activation::ReLU, 0, &[0.0; 4]).unwrap();
        assert!(mask.is_empty());
        assert_eq!(y, vec![0.0; 4]);
    }

    #[test]
    fn matches_independent_dense_oracle() {
        let mut seed = 42;
        for trial in 0..20 {
            let layer = relu_layer(random_matrix(8, 4, &mut seed), random_matrix(4, 8, &mut seed));
            let x: Vec<f32> = (0..4).map(|_| splitmix(&mut seed)).collect();
            let (y, mask) = dense_mlp_forward(&layer, Activation::ReLU, 0, &x).unwrap();
            let want = dense_oracle(&layer, &x);
            for (a, b) in y.iter().zip(&want) {
                let scale = b.abs().max(1.0);
                assert!(
                    (a - b).abs() <= 1e-6 * scale,
                    "trial {trial}: {a} vs {b}"
                );
            }
            // The oracle's h is positive exactly on the mask.
            for i in mask.indices() {
                let z: f32 = (0..4).map(|k| layer.fc1.get(*i, k) * x[k]).sum();
                assert!(z > 0.0);
            }
        }
    }

    #[test]
    fn reglu_mask_keys_off_gate() {
        let fc1 = Matrix::new(2, 1, vec![-3.0, 5.0]).unwrap();
        let gate = Matrix::new(2, 1, vec![1.0, -1.0]).unwrap();
        let fc2 = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let layer = LayerWeights {
            fc1,
            fc2,
            gate: Some(gate),
            fc1_bias: None,
            gate_bias: None,
        };
        let (y, mask) = dense_mlp_forward(&layer, Activation::ReGLU, 0, &[2.0]).unwrap();
        // Neuron 0: gate = 2 > 0, so it is active even though fc1 row is negative.
        assert_eq!(mask.indices(), &[0]);
        assert_eq!(y, vec![2.0 * -6.0]);
    }

    #[test]
    fn fc1_bias_shifts_the_mask() {
        let fc1 = Matrix::new(1, 1, vec![1.0]).unwrap();
        let fc2 = Matrix::new(1, 1, vec![1.0]).unwrap();
        let mut layer = relu_layer(fc1, fc2);
        layer.fc1_bias = Some(vec![-2.0]);
        let (_, mask) = dense_mlp_forward(&layer, Activation::ReLU, 0, &[1.0]).unwrap();
        assert!(mask.is_empty());
        let (_, mask) = dense_mlp_forward(&layer, Activation::ReLU, 0, &[3.0]).unwrap();
        assert_eq!(mask.indices(), &[0]);
    }

    #[test]
    fn dimension_mismatch_names_the_layer() {
        let fc1 = Matrix::new(2, 2, vec![0.0; 4]).unwrap();
        let fc2 = Matrix::new(2, 2, vec![0.0; 4]).unwrap();
        let layer = relu_layer(fc1, fc2);
        let err = dense_mlp_forward(&layer, Activation::ReLU, 3, &[1.0]).unwrap_err();
        assert_eq!(
            err,
            Error::DimMismatch {
                expected: 2,
                actual: 1
            }
        );
        let bad_fc2 = relu_layer(
            Matrix::new(2, 2, vec![0.0; 4]).unwrap(),
            Matrix::new(1, 2, vec![0.0; 2]).unwrap(),
        );
        let err = dense_mlp_forward(&bad_fc2, Activation::ReLU, 3, &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { layer: 3, name: "fc2", .. }));
    }

    #[test]
    fn mask_constructor_rejects_disorder() {
        assert!(ActivationMask::new(0, vec![0, 2, 5]).is_ok());
        assert_eq!(
            ActivationMask::new(0, vec![2, 1]).unwrap_err(),
            Error::NotAscending
        );
        assert_eq!(
            ActivationMask::new(0, vec![1, 1]).unwrap_err(),
            Error::NotAscending
        );
    }

    #[test]
    fn forward_trace_propagates_layer_outputs() {
        let mut seed = 11;
        let config = ModelConfig {
            num_layers: 2,
            hidden_dim: 3,
            intermediate_dim: 5,
            activation: Activation::ReLU,
        };
        let layers = (0..2)
            .map(|_| relu_layer(random_matrix(5, 3, &mut seed), random_matrix(3, 5, &mut seed)))
            .collect();
        let model = Model::new(config, layers).unwrap();
        let x = vec![0.3, -0.7, 0.9];
        let trace = model.forward_trace(&x).unwrap();
        assert_eq!(trace.layer_inputs[0], x);
        let (y0, _) = model.forward_layer(0, &x).unwrap();
        assert_eq!(trace.layer_inputs[1], y0);
        let (y1, _) = model.forward_layer(1, &y0).unwrap();
        assert_eq!(trace.output, y1);
    }
}
