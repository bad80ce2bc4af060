//! Planted-structure workload generator.
//!
//! Builds a toy model plus an input trace whose true activation counts follow
//! a configurable power law. Per-neuron activation probabilities are drawn
//! from a Zipf profile over a random rank permutation; biases on the gating
//! branch are then set to the empirical quantile of each neuron's
//! pre-activations over the generated trace, so the planted per-neuron counts
//! are hit exactly when the trace is re-profiled.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::model::{Activation, ActivationMask, LayerWeights, Matrix, Model, ModelConfig};

/// Parameters of the synthetic workload.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub intermediate_dim: usize,
    pub activation: Activation,
    /// Target mean fraction of *inactive* neurons per input, in `[0, 1)`.
    pub sparsity: f64,
    /// Power-law exponent of the planted hotness profile; `s -> 0` gives a
    /// near-uniform profile.
    pub zipf_exponent: f64,
    pub num_inputs: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_layers: 3,
            hidden_dim: 64,
            intermediate_dim: 256,
            activation: Activation::ReLU,
            sparsity: 0.9,
            zipf_exponent: 1.2,
            num_inputs: 256,
            seed: 0,
        }
    }
}

/// A generated model and the trace its structure was planted against.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub model: Model,
    pub trace: Vec<Vec<f32>>,
}

/// Standard normal via Box-Muller, all randomness from the caller's stream.
fn gaussian(rng: &mut ChaCha12Rng) -> f32 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)) as f32
}

/// A fresh trace of standard-normal inputs, independent of any model.
pub fn gaussian_trace(dim: usize, count: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| gaussian(&mut rng)).collect())
        .collect()
}

/// Per-neuron activation probabilities: a Zipf profile over a shuffled rank
/// assignment, rescaled (with clamping to 1.0) until the mean matches
/// `1 - sparsity`.
pub fn planted_probabilities(
    m: usize,
    sparsity: f64,
    zipf_exponent: f64,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    let target_mean = 1.0 - sparsity;
    let mut ranks: Vec<usize> = (0..m).collect();
    ranks.shuffle(rng);
    let weights: Vec<f64> = (0..m)
        .map(|i| libm::pow((ranks[i] + 1) as f64, -zipf_exponent))
        .collect();
    let wsum: f64 = weights.iter().sum();
    let mut base = target_mean * m as f64 / wsum;
    let mut probs = vec![0.0; m];
    // A few fixpoint rounds absorb the distortion from clamping at 1.0.
    for _ in 0..6 {
        for (p, w) in probs.iter_mut().zip(&weights) {
            *p = (base * w).min(1.0);
        }
        let mean: f64 = probs.iter().sum::<f64>() / m as f64;
        if mean <= 0.0 || (mean - target_mean).abs() < 1e-6 {
            break;
        }
        base *= target_mean / mean;
    }
    probs
}

/// Bias that makes exactly `k` of the given pre-activations strictly
/// positive (up to ties, which have measure zero for continuous data).
fn quantile_bias(pre: &[f32], k: usize) -> f32 {
    let mut sorted = pre.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let t = sorted.len();
    if k == 0 {
        -sorted[0] - 1.0
    } else if k >= t {
        -sorted[t - 1] + 1.0
    } else {
        -(sorted[k - 1] + sorted[k]) / 2.0
    }
}

/// Generates the model and trace.
///
/// Layer by layer, weights are drawn at random, the layer's actual inputs
/// (the previous layer's outputs) are pushed through, and gating biases are
/// calibrated so each neuron activates on its planted share of the trace.
/// FC2 is rescaled so layer outputs keep unit RMS; scaling happens before the
/// final forward pass, so re-profiling the trace reproduces every planted
/// mask bit for bit.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, Error> {
    let config = ModelConfig {
        num_layers: spec.num_layers,
        hidden_dim: spec.hidden_dim,
        intermediate_dim: spec.intermediate_dim,
        activation: spec.activation,
    };
    config.validate()?;
    if !(0.0..1.0).contains(&spec.sparsity) {
        return Err(Error::InvalidConfig("sparsity must be in [0, 1)"));
    }
    if spec.zipf_exponent < 0.0 {
        return Err(Error::InvalidConfig("zipf_exponent must be >= 0"));
    }
    if spec.num_inputs == 0 {
        return Err(Error::InvalidConfig("num_inputs must be >= 1"));
    }

    let (d, m, t) = (spec.hidden_dim, spec.intermediate_dim, spec.num_inputs);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let scale = 1.0 / libm::sqrtf(d as f32);

    let trace: Vec<Vec<f32>> = (0..t)
        .map(|_| (0..d).map(|_| gaussian(&mut rng)).collect())
        .collect();

    let mut inputs = trace.clone();
    let mut layers = Vec::with_capacity(spec.num_layers);
    for layer_idx in 0..spec.num_layers {
        let probs = planted_probabilities(m, spec.sparsity, spec.zipf_exponent, &mut rng);
        let fc1 = Matrix::from_fn(m, d, |_, _| gaussian(&mut rng) * scale);
        let gate = match spec.activation {
            Activation::ReLU => None,
            Activation::ReGLU => Some(Matrix::from_fn(m, d, |_, _| gaussian(&mut rng) * scale)),
        };
        let mask_source = gate.as_ref().unwrap_or(&fc1);

        // Calibrate the gating bias per neuron against the actual inputs.
        let mut bias = vec![0.0f32; m];
        let mut pre = vec![0.0f32; t];
        for i in 0..m {
            for (z, x) in pre.iter_mut().zip(&inputs) {
                *z = crate::model::dot(mask_source.row(i), x);
            }
            let k = libm::round(probs[i] * t as f64) as usize;
            bias[i] = quantile_bias(&pre, k.min(t));
        }

        let mut fc2 = Matrix::from_fn(d, m, |_, _| gaussian(&mut rng) * scale);
        let mut layer = LayerWeights {
            fc1,
            fc2: fc2.clone(),
            gate,
            fc1_bias: None,
            gate_bias: None,
        };
        match spec.activation {
            Activation::ReLU => layer.fc1_bias = Some(bias),
            Activation::ReGLU => layer.gate_bias = Some(bias),
        }

        // First pass only measures the output scale.
        let mut sq_sum = 0.0f64;
        for x in &inputs {
            let (y, _) = crate::model::dense_mlp_forward(&layer, spec.activation, layer_idx, x)?;
            for v in y {
                sq_sum += (v as f64) * (v as f64);
            }
        }
        let rms = libm::sqrt(sq_sum / (t * d) as f64) as f32;
        if rms > 1e-12 {
            let s = 1.0 / rms;
            for v in fc2.data_mut() {
                *v *= s;
            }
            layer.fc2 = fc2;
        }

        // Second pass with the final weights produces the next layer's inputs.
        for x in inputs.iter_mut() {
            let (y, _) = crate::model::dense_mlp_forward(&layer, spec.activation, layer_idx, x)?;
            *x = y;
        }
        layers.push(layer);
    }

    Ok(SynthOutput {
        model: Model::new(config, layers)?,
        trace,
    })
}

/// Planted mask-prediction dataset with a low-rank decision structure.
///
/// Inputs are `(gaussian in rank-r subspace lifted to d-1 dims, constant 1)`;
/// masks are `{ i : w_i . x > 0 }` where every `w_i` lies in the lifted
/// subspace plus the constant channel. The constant coordinate carries the
/// per-neuron bias that plants the sparsity profile, so the boundaries stay
/// homogeneous and a small shared hidden layer can represent them exactly.
pub fn planted_mask_dataset(
    d: usize,
    m: usize,
    rank: usize,
    sparsity: f64,
    zipf_exponent: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<(Vec<f32>, ActivationMask)>, Error> {
    if d < 2 || rank == 0 || rank > d - 1 {
        return Err(Error::InvalidConfig("need d >= 2 and 1 <= rank <= d-1"));
    }
    if count == 0 {
        return Err(Error::InvalidConfig("count must be >= 1"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let probs = planted_probabilities(m, sparsity, zipf_exponent, &mut rng);

    // Basis: rank directions over the first d-1 coordinates.
    let basis: Vec<Vec<f32>> = (0..rank)
        .map(|_| (0..d - 1).map(|_| gaussian(&mut rng)).collect())
        .collect();
    // Neuron directions inside the span of the basis.
    let dirs: Vec<Vec<f32>> = (0..m)
        .map(|_| {
            let coeff: Vec<f32> = (0..rank).map(|_| gaussian(&mut rng)).collect();
            (0..d - 1)
                .map(|j| {
                    let mut v = 0.0;
                    for (c, b) in coeff.iter().zip(&basis) {
                        v += c * b[j];
                    }
                    v
                })
                .collect()
        })
        .collect();

    let inputs: Vec<Vec<f32>> = (0..count)
        .map(|_| {
            let mut x: Vec<f32> = (0..d - 1).map(|_| gaussian(&mut rng)).collect();
            x.push(1.0);
            x
        })
        .collect();

    // Plant each neuron's activation count through the constant channel.
    let mut pre = vec![0.0f32; count];
    let mut dataset: Vec<(Vec<f32>, ActivationMask)> =
        inputs.iter().map(|x| (x.clone(), ActivationMask::empty(0))).collect();
    let mut active: Vec<Vec<usize>> = vec![Vec::new(); count];
    for i in 0..m {
        for (z, x) in pre.iter_mut().zip(&inputs) {
            *z = crate::model::dot(&dirs[i], &x[..d - 1]);
        }
        let k = libm::round(probs[i] * count as f64) as usize;
        let b = quantile_bias(&pre, k.min(count));
        for (t, z) in pre.iter().enumerate() {
            if z + b > 0.0 {
                active[t].push(i);
            }
        }
    }
    for (t, acts) in active.into_iter().enumerate() {
        dataset[t].1 = ActivationMask::new(0, acts)?;
    }
    Ok(dataset)
}
