//! Offline activation-statistics collection and power-law analysis.
//!
//! Profiling replays a corpus through the dense reference forward pass and
//! tallies, per neuron, how many inputs activated it. The descending-count
//! order (ties broken by ascending neuron id) is the canonical order for the
//! CDF, hot-set, and overlap queries.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::error::Error;
use crate::model::{ActivationMask, Model, NeuronId};

/// Per-neuron activation counts over a profiled corpus.
///
/// Counts are mergeable: profiling two shards and merging gives exactly the
/// same statistics as profiling the concatenated corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationStats {
    num_layers: usize,
    intermediate_dim: usize,
    counts: Vec<u64>,
    total_inputs: u64,
}

impl ActivationStats {
    pub fn new(num_layers: usize, intermediate_dim: usize) -> Self {
        ActivationStats {
            num_layers,
            intermediate_dim,
            counts: vec![0; num_layers * intermediate_dim],
            total_inputs: 0,
        }
    }

    /// Rebuilds statistics from raw parts (used by the file loader).
    pub fn from_parts(
        num_layers: usize,
        intermediate_dim: usize,
        counts: Vec<u64>,
        total_inputs: u64,
    ) -> Result<Self, Error> {
        if counts.len() != num_layers * intermediate_dim {
            return Err(Error::DimMismatch {
                expected: num_layers * intermediate_dim,
                actual: counts.len(),
            });
        }
        if counts.iter().any(|&c| c > total_inputs) {
            return Err(Error::InvalidConfig("count exceeds total_inputs"));
        }
        Ok(ActivationStats {
            num_layers,
            intermediate_dim,
            counts,
            total_inputs,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn intermediate_dim(&self) -> usize {
        self.intermediate_dim
    }

    pub fn neuron_count(&self) -> usize {
        self.counts.len()
    }

    /// Counts in layer-major neuron order.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, id: NeuronId) -> u64 {
        self.counts[id.flat(self.intermediate_dim)]
    }

    pub fn total_inputs(&self) -> u64 {
        self.total_inputs
    }

    pub fn total_activations(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Records one input's mask for one layer.
    pub fn record_mask(&mut self, mask: &ActivationMask) -> Result<(), Error> {
        if mask.layer() >= self.num_layers {
            return Err(Error::IndexOutOfRange {
                index: mask.layer(),
                bound: self.num_layers,
            });
        }
        if let Some(max) = mask.max_index() {
            if max >= self.intermediate_dim {
                return Err(Error::IndexOutOfRange {
                    index: max,
                    bound: self.intermediate_dim,
                });
            }
        }
        let base = mask.layer() * self.intermediate_dim;
        for &i in mask.indices() {
            self.counts[base + i] += 1;
        }
        Ok(())
    }

    /// Marks one more profiled input. Call once per input after recording all
    /// of its layer masks.
    pub fn finish_input(&mut self) {
        self.total_inputs += 1;
    }

    /// Adds another shard's counts into this one.
    pub fn merge(&mut self, other: &ActivationStats) -> Result<(), Error> {
        if self.num_layers != other.num_layers
            || self.intermediate_dim != other.intermediate_dim
        {
            return Err(Error::UniverseMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_inputs += other.total_inputs;
        Ok(())
    }

    /// Neuron ids sorted by descending count, ties by ascending id. This is
    /// the canonical hotness order used by every query below.
    pub fn hotness_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_unstable_by_key(|&i| (Reverse(self.counts[i]), i));
        order
    }

    pub fn neuron_id(&self, flat: usize) -> NeuronId {
        NeuronId::from_flat(flat, self.intermediate_dim)
    }
}

/// Profiles a corpus: `counts[n]` becomes the number of inputs whose true
/// mask contains neuron `n`, with layer outputs propagated through the stack.
pub fn profile(model: &Model, corpus: &[Vec<f32>]) -> Result<ActivationStats, Error> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let cfg = model.config();
    let mut stats = ActivationStats::new(cfg.num_layers, cfg.intermediate_dim);
    for input in corpus {
        let (_, masks) = model.forward(input)?;
        for mask in &masks {
            stats.record_mask(mask)?;
        }
        stats.finish_input();
    }
    Ok(stats)
}

/// Replays the corpus and keeps every input's per-layer true masks, the raw
/// material for the latency simulator.
pub fn mask_trace(model: &Model, corpus: &[Vec<f32>]) -> Result<Vec<Vec<ActivationMask>>, Error> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus
        .iter()
        .map(|input| model.forward(input).map(|(_, masks)| masks))
        .collect()
}

/// Builds the (layer input, true mask) training pairs for one layer's mask
/// predictor.
pub fn layer_training_set(
    model: &Model,
    corpus: &[Vec<f32>],
    layer: usize,
) -> Result<Vec<(Vec<f32>, ActivationMask)>, Error> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if layer >= model.config().num_layers {
        return Err(Error::IndexOutOfRange {
            index: layer,
            bound: model.config().num_layers,
        });
    }
    corpus
        .iter()
        .map(|input| {
            let trace = model.forward_trace(input)?;
            Ok((
                trace.layer_inputs[layer].clone(),
                trace.masks[layer].clone(),
            ))
        })
        .collect()
}

/// Cumulative activation-mass curve over neurons in hotness order.
///
/// Point `k` is `(k / N, mass of the k hottest neurons / total mass)`; the
/// curve starts at the origin and ends at `(1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    points: Vec<(f64, f64)>,
}

impl CdfCurve {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Smallest neuron fraction whose cumulative mass reaches `mass`.
    pub fn coverage_fraction(&self, mass: f64) -> f64 {
        for &(x, y) in &self.points {
            if y >= mass {
                return x;
            }
        }
        1.0
    }
}

/// Builds the activation CDF. Errors if nothing was ever activated.
pub fn activation_cdf(stats: &ActivationStats) -> Result<CdfCurve, Error> {
    let total = stats.total_activations();
    if total == 0 {
        return Err(Error::NoActivations);
    }
    let order = stats.hotness_order();
    let n = order.len() as f64;
    let mut points = Vec::with_capacity(order.len() + 1);
    points.push((0.0, 0.0));
    let mut cum = 0u64;
    for (k, &i) in order.iter().enumerate() {
        cum += stats.counts()[i];
        points.push(((k + 1) as f64 / n, cum as f64 / total as f64));
    }
    Ok(CdfCurve { points })
}

/// Smallest prefix of the hotness order whose activation mass reaches
/// `coverage` (a fraction of total activations).
pub fn hot_set(stats: &ActivationStats, coverage: f64) -> Result<Vec<NeuronId>, Error> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::FractionOutOfRange { value: coverage });
    }
    let total = stats.total_activations();
    let threshold = coverage * total as f64;
    let mut cum = 0u64;
    let mut set = Vec::new();
    for &i in &stats.hotness_order() {
        if cum as f64 >= threshold - 1e-9 {
            break;
        }
        cum += stats.counts()[i];
        set.push(stats.neuron_id(i));
    }
    Ok(set)
}

/// Fraction of the top `top_fraction` hottest neurons of `a` that are also in
/// the top set of `b`.
pub fn overlap(a: &ActivationStats, b: &ActivationStats, top_fraction: f64) -> Result<f64, Error> {
    if a.num_layers() != b.num_layers() || a.intermediate_dim() != b.intermediate_dim() {
        return Err(Error::UniverseMismatch);
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::FractionOutOfRange {
            value: top_fraction,
        });
    }
    let n = a.neuron_count();
    let k = (libm::ceil(top_fraction * n as f64) as usize).clamp(1, n);
    let top = |s: &ActivationStats| -> Vec<usize> {
        let mut ids: Vec<usize> = s.hotness_order().into_iter().take(k).collect();
        ids.sort_unstable();
        ids
    };
    let ta = top(a);
    let tb = top(b);
    let mut inter = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < ta.len() && j < tb.len() {
        match ta[i].cmp(&tb[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(inter as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, LayerWeights, Matrix, Model, ModelConfig};
    use alloc::vec;

    fn stats_with(counts: Vec<u64>, total: u64) -> ActivationStats {
        ActivationStats::from_parts(1, counts.len(), counts, total).unwrap()
    }

    fn tiny_model(fc1_rows: Vec<f32>, m: usize, d: usize) -> Model {
        let config = ModelConfig {
            num_layers: 1,
            hidden_dim: d,
            intermediate_dim: m,
            activation: Activation::ReLU,
        };
        let layer = LayerWeights {
            fc1: Matrix::new(m, d, fc1_rows).unwrap(),
            fc2: Matrix::zeros(d, m),
            gate: None,
            fc1_bias: None,
            gate_bias: None,
        };
        Model::new(config, vec![layer]).unwrap()
    }

    #[test]
    fn zero_corpus_counts_nothing() {
        let model = tiny_model(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        let stats = profile(&model, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(stats.counts(), &[0, 0]);
        assert_eq!(stats.total_inputs(), 1);
    }

    #[test]
    fn constructed_sign_pattern_counts_one_neuron() {
        // Row 0 fires on e0, row 1 never does.
        let model = tiny_model(vec![1.0, 0.0, -1.0, 0.0], 2, 2);
        let stats = profile(&model, &[vec![1.0, 0.0]]).unwrap();
        assert_eq!(stats.counts(), &[1, 0]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let model = tiny_model(vec![1.0], 1, 1);
        assert_eq!(profile(&model, &[]).unwrap_err(), Error::EmptyCorpus);
    }

    #[test]
    fn recount_oracle_agrees() {
        // Independent recount: call the forward pass per input and tally by hand.
        let mut state = 0xfeedu64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 40) as f32 / (1u64 << 24) as f32) - 0.5
        };
        let d = 6;
        let m = 10;
        let config = ModelConfig {
            num_layers: 2,
            hidden_dim: d,
            intermediate_dim: m,
            activation: Activation::ReLU,
        };
        let layers = (0..2)
            .map(|_| LayerWeights {
                fc1: Matrix::from_fn(m, d, |_, _| rnd()),
                fc2: Matrix::from_fn(d, m, |_, _| rnd()),
                gate: None,
                fc1_bias: None,
                gate_bias: None,
            })
            .collect();
        let model = Model::new(config, layers).unwrap();
        let corpus: Vec<Vec<f32>> = (0..64).map(|_| (0..d).map(|_| rnd()).collect()).collect();

        let stats = profile(&model, &corpus).unwrap();

        let mut recount = vec![0u64; 2 * m];
        for input in &corpus {
            let (_, masks) = model.forward(input).unwrap();
            for mask in masks {
                for &i in mask.indices() {
                    recount[mask.layer() * m + i] += 1;
                }
            }
        }
        assert_eq!(stats.counts(), recount.as_slice());
    }

    #[test]
    fn merge_equals_joint_profile() {
        let model = tiny_model(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        let a: Vec<Vec<f32>> = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        let b: Vec<Vec<f32>> = vec![vec![0.0, 1.0]];
        let joint: Vec<Vec<f32>> = a.iter().chain(&b).cloned().collect();
        let mut merged = profile(&model, &a).unwrap();
        merged.merge(&profile(&model, &b).unwrap()).unwrap();
        assert_eq!(merged, profile(&model, &joint).unwrap());
    }

    #[test]
    fn cdf_single_hot_neuron() {
        let stats = stats_with(vec![4, 0, 0, 0], 4);
        let curve = activation_cdf(&stats).unwrap();
        assert!(curve.points().contains(&(0.25, 1.0)));
        assert_eq!(*curve.points().last().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn cdf_uniform_is_diagonal() {
        let stats = stats_with(vec![3; 10], 5);
        let curve = activation_cdf(&stats).unwrap();
        for k in 0..=10u32 {
            let p = curve.points()[k as usize];
            assert!((p.0 - k as f64 / 10.0).abs() < 1e-12);
            assert!((p.1 - k as f64 / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_zipf_matches_sort_oracle() {
        // Zipf-ish synthetic counts.
        let counts: Vec<u64> = (0..1024u64)
            .map(|i| {
                let rank = ((i * 7919) % 1024) + 1;
                (100000.0 / libm::pow(rank as f64, 1.2)) as u64
            })
            .collect();
        let stats = stats_with(counts.clone(), 100000);
        let curve = activation_cdf(&stats).unwrap();

        // Oracle: sort descending, accumulate, find 80% point.
        let mut sorted = counts.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let total: u64 = sorted.iter().sum();
        let mut cum = 0u64;
        let mut k80 = 0usize;
        for (k, c) in sorted.iter().enumerate() {
            cum += c;
            if cum as f64 >= 0.8 * total as f64 {
                k80 = k + 1;
                break;
            }
        }
        assert_eq!(curve.coverage_fraction(0.8), k80 as f64 / 1024.0);
        // Power law: way fewer than half the neurons cover 80% of mass.
        assert!(curve.coverage_fraction(0.8) < 0.5);
    }

    #[test]
    fn cdf_needs_activations() {
        let stats = stats_with(vec![0, 0], 3);
        assert_eq!(activation_cdf(&stats).unwrap_err(), Error::NoActivations);
    }

    #[test]
    fn hot_set_basics() {
        let stats = stats_with(vec![9, 1], 9);
        let set = hot_set(&stats, 0.8).unwrap();
        assert_eq!(set, vec![NeuronId::new(0, 0)]);

        // coverage 1.0 takes exactly the neurons with nonzero count.
        let stats = stats_with(vec![5, 0, 2, 0], 5);
        let set = hot_set(&stats, 1.0).unwrap();
        assert_eq!(set, vec![NeuronId::new(0, 0), NeuronId::new(0, 2)]);

        assert!(hot_set(&stats, 0.0).is_err());
        assert!(hot_set(&stats, 1.5).is_err());
    }

    #[test]
    fn hot_set_matches_prefix_oracle_and_is_minimal() {
        let counts: Vec<u64> = (0..256u64)
            .map(|i| (5000.0 / libm::pow(((i * 31) % 256 + 1) as f64, 1.2)) as u64)
            .collect();
        let stats = stats_with(counts.clone(), 5000);
        let set = hot_set(&stats, 0.8).unwrap();

        // Brute-force minimal prefix over the same canonical order.
        let order = stats.hotness_order();
        let total: u64 = counts.iter().sum();
        let mut cum = 0u64;
        let mut want = Vec::new();
        for &i in &order {
            if (cum as f64) >= 0.8 * total as f64 {
                break;
            }
            cum += counts[i];
            want.push(stats.neuron_id(i));
        }
        assert_eq!(set, want);

        // Minimality: dropping the last member loses the coverage.
        let kept: u64 = set[..set.len() - 1]
            .iter()
            .map(|id| stats.count(*id))
            .sum();
        assert!((kept as f64) < 0.8 * total as f64);
    }

    #[test]
    fn overlap_identity_and_disjoint() {
        let a = stats_with(vec![5, 4, 3, 2, 1, 0, 0, 0, 0, 0], 5);
        assert_eq!(overlap(&a, &a, 0.2).unwrap(), 1.0);

        let b = stats_with(vec![0, 0, 0, 0, 0, 1, 2, 3, 4, 5], 5);
        assert_eq!(overlap(&a, &b, 0.2).unwrap(), 0.0);

        let c = stats_with(vec![1, 1], 1);
        assert_eq!(overlap(&a, &c, 0.2).unwrap_err(), Error::UniverseMismatch);
    }
}
