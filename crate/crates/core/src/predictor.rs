//! Adaptive, non-fixed-size activation-mask predictors.
//!
//! Each layer gets a single-hidden-layer MLP with per-neuron independent
//! logistic outputs. The hidden dimension starts from a sparsity-driven
//! estimate (sparser layers get smaller predictors) and is doubled until
//! validation recall reaches the target, with one halving attempt when the
//! target is beaten with margin. Recall, not precision, is the criterion:
//! a missed active neuron corrupts the output, a false positive only costs
//! compute.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::model::{dot, ActivationMask, Matrix, Model};

/// Default smallest hidden dimension.
pub const H_MIN_DEFAULT: usize = 4;

/// Per-layer mask predictor: `active iff sigmoid(w_out_i . relu(w_in x)) > threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub layer: usize,
    /// `hidden x d`.
    pub w_in: Matrix,
    /// `m x hidden`.
    pub w_out: Matrix,
    pub hidden: usize,
    pub threshold: f32,
}

impl PredictorModel {
    pub fn param_count(&self) -> u64 {
        (self.hidden * (self.w_in.cols() + self.w_out.rows())) as u64
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_out.rows()
    }
}

/// How one layer's predictor was sized and how it performed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SizingReport {
    pub layer: usize,
    pub sparsity: f64,
    pub initial_hidden: usize,
    pub final_hidden: usize,
    /// Number of train runs performed (including grow/shrink retrains).
    pub iterations: usize,
    pub recall: f64,
    pub precision: f64,
    /// Set when the recall target was not reached within the size budget.
    pub target_missed: bool,
    /// Gini coefficient of per-neuron activation counts in the dataset,
    /// recorded for analysis only.
    pub skew_gini: f64,
}

/// Training hyperparameters. The defaults are tuned for the desk-scale
/// planted workloads this crate generates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub recall_target: f64,
    pub h_min: usize,
    /// Hidden-dimension cap; `None` means `d / 2`.
    pub h_max: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    /// Loss weight of active-neuron examples, biasing training toward recall.
    pub pos_weight: f32,
    pub seed: u64,
    /// Fraction of the dataset held out for validation.
    pub val_fraction: f64,
    /// Recall margin above the target that triggers one shrink attempt.
    pub shrink_margin: f64,
    pub threshold: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            recall_target: 0.95,
            h_min: H_MIN_DEFAULT,
            h_max: None,
            epochs: 40,
            learning_rate: 0.08,
            pos_weight: 4.0,
            seed: 0,
            val_fraction: 0.2,
            shrink_margin: 0.02,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    fn h_max_for(&self, d: usize) -> usize {
        let cap = self.h_max.unwrap_or(d / 2);
        cap.max(self.h_min).max(1)
    }
}

/// Sparsity-driven initial hidden size: `clamp(ceil((1 - sparsity) * H_max),
/// H_min, H_max)` with `H_min = 4`, `H_max = d / 2`. Monotone non-increasing
/// in sparsity; out-of-range sparsity is clamped.
pub fn initial_hidden_dim(sparsity: f64, d: usize, _m: usize) -> usize {
    initial_hidden_dim_with(sparsity, H_MIN_DEFAULT, (d / 2).max(H_MIN_DEFAULT).max(1))
}

/// [`initial_hidden_dim`] with explicit bounds.
pub fn initial_hidden_dim_with(sparsity: f64, h_min: usize, h_max: usize) -> usize {
    let s = sparsity.clamp(0.0, 1.0);
    let raw = libm::ceil((1.0 - s) * h_max as f64) as usize;
    raw.clamp(h_min.max(1), h_max.max(h_min).max(1))
}

// f64 internally so extreme logits stay strictly inside (0, 1) and the
// threshold-0 boundary behaves.
fn sigmoid(z: f32) -> f64 {
    1.0 / (1.0 + libm::exp(-(z as f64)))
}

/// Predicted activation mask for one input.
pub fn predict_mask(model: &PredictorModel, x: &[f32]) -> Result<ActivationMask, Error> {
    if x.len() != model.input_dim() {
        return Err(Error::DimMismatch {
            expected: model.input_dim(),
            actual: x.len(),
        });
    }
    let hid = hidden_activations(&model.w_in, x);
    let active = (0..model.output_dim())
        .filter(|&i| sigmoid(dot(model.w_out.row(i), &hid)) > model.threshold as f64)
        .collect();
    ActivationMask::new(model.layer, active)
}

/// Total predictor parameters as a fraction of the model's parameters.
pub fn predictor_budget(predictors: &[PredictorModel], model: &Model) -> f64 {
    let pred: u64 = predictors.iter().map(|p| p.param_count()).sum();
    pred as f64 / model.param_count() as f64
}

fn hidden_activations(w_in: &Matrix, x: &[f32]) -> Vec<f32> {
    (0..w_in.rows())
        .map(|j| {
            let z = dot(w_in.row(j), x);
            if z > 0.0 {
                z
            } else {
                0.0
            }
        })
        .collect()
}

struct EvalCounts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl EvalCounts {
    fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }
}

fn evaluate(
    model: &PredictorModel,
    samples: &[&(Vec<f32>, ActivationMask)],
) -> Result<EvalCounts, Error> {
    let mut counts = EvalCounts { tp: 0, fp: 0, fn_: 0 };
    for (x, truth) in samples {
        let predicted = predict_mask(model, x)?;
        let mut p = predicted.indices().iter().peekable();
        let mut t = truth.indices().iter().peekable();
        loop {
            match (p.peek(), t.peek()) {
                (Some(&&a), Some(&&b)) if a == b => {
                    counts.tp += 1;
                    p.next();
                    t.next();
                }
                (Some(&&a), Some(&&b)) if a < b => {
                    counts.fp += 1;
                    p.next();
                }
                (Some(_), Some(_)) => {
                    counts.fn_ += 1;
                    t.next();
                }
                (Some(_), None) => {
                    counts.fp += 1;
                    p.next();
                }
                (None, Some(_)) => {
                    counts.fn_ += 1;
                    t.next();
                }
                (None, None) => break,
            }
        }
    }
    Ok(counts)
}

/// Per-parameter adaptive state for one weight tensor.
struct AdamState {
    m: Vec<f32>,
    v: Vec<f32>,
}

impl AdamState {
    fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, weights: &mut [f32], grads: &[f32], lr: f32, t: i32) {
        const B1: f32 = 0.9;
        const B2: f32 = 0.999;
        const EPS: f32 = 1e-8;
        let c1 = 1.0 - libm::powf(B1, t as f32);
        let c2 = 1.0 - libm::powf(B2, t as f32);
        for (((w, g), m), v) in weights
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            *w -= lr * (*m / c1) / (libm::sqrtf(*v / c2) + EPS);
        }
    }
}

/// One training run at a fixed hidden size: mini-batch Adam on the weighted
/// per-neuron logistic loss, deterministic under the given seed.
fn train_once(
    train: &[&(Vec<f32>, ActivationMask)],
    layer: usize,
    d: usize,
    m: usize,
    hidden: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> PredictorModel {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let scale_in = libm::sqrtf(6.0 / (d + hidden) as f32);
    let scale_out = libm::sqrtf(6.0 / (hidden + m) as f32);
    let mut w_in = Matrix::from_fn(hidden, d, |_, _| (rng.gen::<f32>() * 2.0 - 1.0) * scale_in);
    let mut w_out = Matrix::from_fn(m, hidden, |_, _| (rng.gen::<f32>() * 2.0 - 1.0) * scale_out);

    let mut adam_in = AdamState::new(hidden * d);
    let mut adam_out = AdamState::new(m * hidden);
    let mut g_in = vec![0.0f32; hidden * d];
    let mut g_out = vec![0.0f32; m * hidden];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut truth = vec![false; m];
    let mut t = 0i32;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            g_in.iter_mut().for_each(|g| *g = 0.0);
            g_out.iter_mut().for_each(|g| *g = 0.0);
            for &idx in chunk {
                let (x, mask) = train[idx];
                for v in truth.iter_mut() {
                    *v = false;
                }
                for &i in mask.indices() {
                    truth[i] = true;
                }

                let hid = hidden_activations(&w_in, x);
                let mut dhid = vec![0.0f32; hidden];
                for i in 0..m {
                    let p = sigmoid(dot(w_out.row(i), &hid)) as f32;
                    let g = if truth[i] {
                        cfg.pos_weight * (p - 1.0)
                    } else {
                        p
                    };
                    let row = w_out.row(i);
                    let base = i * hidden;
                    for j in 0..hidden {
                        dhid[j] += g * row[j];
                        g_out[base + j] += g * hid[j];
                    }
                }
                for j in 0..hidden {
                    if hid[j] > 0.0 && dhid[j] != 0.0 {
                        let base = j * d;
                        for (k, xk) in x.iter().enumerate() {
                            g_in[base + k] += dhid[j] * xk;
                        }
                    }
                }
            }
            let inv = 1.0 / chunk.len() as f32;
            g_in.iter_mut().for_each(|g| *g *= inv);
            g_out.iter_mut().for_each(|g| *g *= inv);
            t += 1;
            adam_in.step(w_in.data_mut(), &g_in, cfg.learning_rate, t);
            adam_out.step(w_out.data_mut(), &g_out, cfg.learning_rate, t);
        }
    }

    PredictorModel {
        layer,
        w_in,
        w_out,
        hidden,
        threshold: cfg.threshold,
    }
}

/// Gini coefficient of per-neuron activation counts (0 = uniform).
fn gini(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 || counts.is_empty() {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as f64 + 1.0) * c as f64)
        .sum();
    (2.0 * weighted) / (n * total as f64) - (n + 1.0) / n
}

/// Trains an adaptively sized predictor for one layer.
///
/// Starts at the sparsity-driven hidden size; doubles (capped at `H_max`)
/// while validation recall is below target; when the target is beaten by the
/// shrink margin, tries one halving and keeps the smaller model if it still
/// meets the target. A missed target is reported in the SizingReport, not
/// raised as an error.
pub fn train_adaptive(
    dataset: &[(Vec<f32>, ActivationMask)],
    layer: usize,
    sparsity: f64,
    cfg: &TrainConfig,
) -> Result<(PredictorModel, SizingReport), Error> {
    if dataset.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    let d = dataset[0].0.len();
    let m = dataset
        .iter()
        .filter_map(|(_, mask)| mask.max_index())
        .max()
        .map_or(1, |mx| mx + 1);
    for (x, _) in dataset {
        if x.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                actual: x.len(),
            });
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let val_len = ((dataset.len() as f64 * cfg.val_fraction) as usize).clamp(1, dataset.len() - 1);
    let (train_idx, val_idx) = order.split_at(dataset.len() - val_len);
    let train: Vec<&(Vec<f32>, ActivationMask)> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let val: Vec<&(Vec<f32>, ActivationMask)> = val_idx.iter().map(|&i| &dataset[i]).collect();

    let mut neuron_counts = vec![0u64; m];
    for (_, mask) in dataset {
        for &i in mask.indices() {
            neuron_counts[i] += 1;
        }
    }
    let skew_gini = gini(&neuron_counts);

    let h_max = cfg.h_max_for(d);
    let initial = initial_hidden_dim_with(sparsity, cfg.h_min, h_max);

    let mut hidden = initial;
    let mut iterations = 0usize;
    let mut best: Option<(PredictorModel, EvalCounts)> = None;
    let result = loop {
        let seed = cfg.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(iterations as u64);
        let model = train_once(&train, layer, d, m, hidden, cfg, seed);
        let counts = evaluate(&model, &val)?;
        iterations += 1;
        let recall = counts.recall();

        if recall >= cfg.recall_target {
            if recall >= cfg.recall_target + cfg.shrink_margin && hidden / 2 >= cfg.h_min {
                let small_seed =
                    cfg.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(iterations as u64);
                let smaller = train_once(&train, layer, d, m, hidden / 2, cfg, small_seed);
                let small_counts = evaluate(&smaller, &val)?;
                iterations += 1;
                if small_counts.recall() >= cfg.recall_target {
                    break (smaller, small_counts, false);
                }
            }
            break (model, counts, false);
        }

        let improved = best
            .as_ref()
            .map_or(true, |(_, c)| recall > c.recall());
        if improved {
            best = Some((model, counts));
        }
        if hidden >= h_max {
            let (model, counts) = best.take().unwrap();
            break (model, counts, true);
        }
        hidden = (hidden * 2).min(h_max);
    };

    let (model, counts, target_missed) = result;
    let report = SizingReport {
        layer,
        sparsity,
        initial_hidden: initial,
        final_hidden: model.hidden,
        iterations,
        recall: counts.recall(),
        precision: counts.precision(),
        target_missed,
        skew_gini,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::planted_mask_dataset;

    #[test]
    fn sizing_boundaries() {
        assert_eq!(initial_hidden_dim(1.0, 64, 128), 4);
        assert_eq!(initial_hidden_dim(0.0, 64, 128), 32);
        // ceil(0.1 * 32) = 4, already at the floor.
        assert_eq!(initial_hidden_dim(0.9, 64, 128), 4);
        // Monotone non-increasing.
        let mut prev = usize::MAX;
        for step in 0..=10 {
            let h = initial_hidden_dim(step as f64 / 10.0, 64, 128);
            assert!(h <= prev);
            prev = h;
        }
    }

    #[test]
    fn constant_mask_is_learned_at_h_min() {
        // Every input activates neurons {1, 3}; inputs carry a constant channel.
        let mut data = Vec::new();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..80 {
            let mut x: Vec<f32> = (0..7).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect();
            x.push(1.0);
            data.push((x, ActivationMask::new(0, vec![1, 3]).unwrap()));
        }
        let cfg = TrainConfig::default();
        let (model, report) = train_adaptive(&data, 0, 0.75, &cfg).unwrap();
        assert_eq!(report.final_hidden, cfg.h_min);
        assert_eq!(report.recall, 1.0);
        assert!(!report.target_missed);
        assert_eq!(model.hidden, cfg.h_min);
    }

    #[test]
    fn planted_separable_dataset_reaches_recall_target() {
        let data = planted_mask_dataset(32, 32, 2, 0.5, 0.8, 400, 3).unwrap();
        let cfg = TrainConfig::default();
        let (_, report) = train_adaptive(&data, 0, 0.5, &cfg).unwrap();
        assert!(
            report.recall >= 0.95,
            "recall {} (hidden {})",
            report.recall,
            report.final_hidden
        );
    }

    #[test]
    fn sparser_layers_get_smaller_predictors() {
        let sparse = planted_mask_dataset(32, 64, 2, 0.95, 1.0, 400, 5).unwrap();
        let dense = planted_mask_dataset(32, 64, 2, 0.5, 1.0, 400, 5).unwrap();
        let cfg = TrainConfig::default();
        let (_, rs) = train_adaptive(&sparse, 0, 0.95, &cfg).unwrap();
        let (_, rd) = train_adaptive(&dense, 0, 0.5, &cfg).unwrap();
        assert!(rs.final_hidden <= rd.final_hidden);
    }

    #[test]
    fn strongly_negative_outputs_predict_nothing() {
        let model = PredictorModel {
            layer: 0,
            w_in: Matrix::from_fn(2, 3, |_, _| 1.0),
            w_out: Matrix::from_fn(4, 2, |_, _| -50.0),
            hidden: 2,
            threshold: 0.5,
        };
        let mask = predict_mask(&model, &[1.0, 1.0, 1.0]).unwrap();
        assert!(mask.is_empty());
    }

    #[test]
    fn zero_threshold_predicts_everything() {
        let model = PredictorModel {
            layer: 0,
            w_in: Matrix::from_fn(2, 3, |_, _| 0.5),
            w_out: Matrix::from_fn(4, 2, |_, _| -50.0),
            hidden: 2,
            threshold: 0.0,
        };
        let mask = predict_mask(&model, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(mask.len(), 4);
    }

    #[test]
    fn reported_metrics_match_recount_oracle() {
        let data = planted_mask_dataset(16, 24, 2, 0.7, 1.0, 200, 8).unwrap();
        let cfg = TrainConfig {
            seed: 2,
            ..TrainConfig::default()
        };
        let (model, report) = train_adaptive(&data, 0, 0.7, &cfg).unwrap();

        // Re-derive the validation split exactly as training does.
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let val_len = ((data.len() as f64 * cfg.val_fraction) as usize).clamp(1, data.len() - 1);
        let val = &order[data.len() - val_len..];

        // Confusion-matrix recount from scratch.
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for &i in val {
            let (x, truth) = &data[i];
            let pred = predict_mask(&model, x).unwrap();
            for n in 0..24 {
                match (pred.contains(n), truth.contains(n)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
        let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        assert_eq!(report.recall, recall);
        assert_eq!(report.precision, precision);
    }

    #[test]
    fn budget_hand_arithmetic() {
        use crate::model::{Activation, LayerWeights, Model, ModelConfig};
        let config = ModelConfig {
            num_layers: 1,
            hidden_dim: 64,
            intermediate_dim: 64,
            activation: Activation::ReLU,
        };
        let layer = LayerWeights {
            fc1: Matrix::zeros(64, 64),
            fc2: Matrix::zeros(64, 64),
            gate: None,
            fc1_bias: None,
            gate_bias: None,
        };
        let model = Model::new(config, vec![layer]).unwrap();
        assert_eq!(predictor_budget(&[], &model), 0.0);

        let pred = PredictorModel {
            layer: 0,
            w_in: Matrix::zeros(4, 64),
            w_out: Matrix::zeros(64, 4),
            hidden: 4,
            threshold: 0.5,
        };
        assert_eq!(predictor_budget(&[pred], &model), 512.0 / 8192.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = planted_mask_dataset(16, 16, 2, 0.8, 1.0, 120, 4).unwrap();
        let cfg = TrainConfig {
            seed: 77,
            ..TrainConfig::default()
        };
        let (m1, r1) = train_adaptive(&data, 0, 0.8, &cfg).unwrap();
        let (m2, r2) = train_adaptive(&data, 0, 0.8, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn tiny_dataset_is_rejected() {
        assert_eq!(
            train_adaptive(&[], 0, 0.5, &TrainConfig::default()).unwrap_err(),
            Error::EmptyDataset
        );
    }
}
