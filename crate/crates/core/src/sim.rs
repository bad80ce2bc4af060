//! Analytic two-tier latency model.
//!
//! Strictly memory-bound: computing a neuron costs one pass over its weight
//! bytes at the unit's bandwidth. A split layer runs both units in parallel
//! (its wall time is the max of the two sides) and pays one synchronization
//! whenever both sides have work. Baseline modes reproduce layer-granular
//! offloading (dense and mask-aware) and a random neuron-granular policy.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::model::{ActivationMask, Model};
use crate::placement::{neuron_time, DevicePair, Unit};

/// Default search cap for [`breakeven_batch`].
pub const MAX_BREAKEVEN_BATCH: u64 = 1024;

/// Simulation knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimParams {
    /// Online predictor cost as a fraction of compute time, charged to modes
    /// that predict masks (everything except the dense baseline).
    pub predictor_overhead: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            predictor_overhead: 0.10,
        }
    }
}

/// Shape and per-neuron weight size of a model, all the simulator needs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelMeta {
    pub num_layers: usize,
    pub neurons_per_layer: usize,
    /// Weight bytes per neuron, per layer.
    pub neuron_bytes: Vec<u64>,
}

impl ModelMeta {
    pub fn from_model(model: &Model) -> Self {
        ModelMeta {
            num_layers: model.config().num_layers,
            neurons_per_layer: model.config().intermediate_dim,
            neuron_bytes: model.layers().iter().map(|l| l.neuron_bytes()).collect(),
        }
    }

    pub fn layer_bytes(&self, layer: usize) -> u64 {
        self.neuron_bytes[layer] * self.neurons_per_layer as u64
    }

    pub fn total_bytes(&self) -> u64 {
        (0..self.num_layers).map(|l| self.layer_bytes(l)).sum()
    }
}

/// Compute and sync seconds one layer spends for one (or many) inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerLatency {
    pub fast_compute: f64,
    pub slow_compute: f64,
    pub sync: f64,
}

impl LayerLatency {
    /// Wall time: the units run in parallel, then synchronize.
    pub fn wall(&self) -> f64 {
        self.fast_compute.max(self.slow_compute) + self.sync
    }

    fn add(&mut self, other: LayerLatency) {
        self.fast_compute += other.fast_compute;
        self.slow_compute += other.slow_compute;
        self.sync += other.sync;
    }
}

/// Aggregated latency over a whole trace.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyBreakdown {
    pub per_layer: Vec<LayerLatency>,
    pub fast_compute: f64,
    pub slow_compute: f64,
    pub sync: f64,
    pub predictor: f64,
    /// Sum of per-layer wall times plus predictor overhead.
    pub total_latency: f64,
    /// Activated-neuron computations done on each unit.
    pub fast_active: u64,
    pub slow_active: u64,
    /// `fast_active / (fast_active + slow_active)`; 0 when nothing activated.
    pub fast_load_share: f64,
}

/// Latency of one layer for one input under a neuron-granular placement.
pub fn layer_latency(
    on_fast: &[bool],
    mask: &ActivationMask,
    t_fast: f64,
    t_slow: f64,
    sync_cost: f64,
) -> LayerLatency {
    let mut fast_n = 0u64;
    let mut slow_n = 0u64;
    for &i in mask.indices() {
        if on_fast[i] {
            fast_n += 1;
        } else {
            slow_n += 1;
        }
    }
    LayerLatency {
        fast_compute: fast_n as f64 * t_fast,
        slow_compute: slow_n as f64 * t_slow,
        sync: if fast_n > 0 && slow_n > 0 { sync_cost } else { 0.0 },
    }
}

struct Tally {
    per_layer: Vec<LayerLatency>,
    wall: f64,
    fast_active: u64,
    slow_active: u64,
}

impl Tally {
    fn new(num_layers: usize) -> Self {
        Tally {
            per_layer: vec![LayerLatency::default(); num_layers],
            wall: 0.0,
            fast_active: 0,
            slow_active: 0,
        }
    }

    fn record(&mut self, layer: usize, lat: LayerLatency, fast_n: u64, slow_n: u64) {
        self.wall += lat.wall();
        self.per_layer[layer].add(lat);
        self.fast_active += fast_n;
        self.slow_active += slow_n;
    }

    fn finish(self, predictor_overhead: f64) -> LatencyBreakdown {
        let fast_compute: f64 = self.per_layer.iter().map(|l| l.fast_compute).sum();
        let slow_compute: f64 = self.per_layer.iter().map(|l| l.slow_compute).sum();
        let sync: f64 = self.per_layer.iter().map(|l| l.sync).sum();
        let predictor = predictor_overhead * self.wall;
        let total_active = self.fast_active + self.slow_active;
        LatencyBreakdown {
            per_layer: self.per_layer,
            fast_compute,
            slow_compute,
            sync,
            predictor,
            total_latency: self.wall + predictor,
            fast_active: self.fast_active,
            slow_active: self.slow_active,
            fast_load_share: if total_active == 0 {
                0.0
            } else {
                self.fast_active as f64 / total_active as f64
            },
        }
    }
}

fn check_trace(meta: &ModelMeta, trace: &[Vec<ActivationMask>]) -> Result<(), Error> {
    for masks in trace {
        if masks.len() != meta.num_layers {
            return Err(Error::DimMismatch {
                expected: meta.num_layers,
                actual: masks.len(),
            });
        }
        for mask in masks {
            if let Some(max) = mask.max_index() {
                if max >= meta.neurons_per_layer {
                    return Err(Error::IndexOutOfRange {
                        index: max,
                        bound: meta.neurons_per_layer,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Simulates a recorded mask trace under a per-neuron placement
/// (`placement[layer][neuron] == true` means FAST).
pub fn simulate(
    placement: &[Vec<bool>],
    meta: &ModelMeta,
    trace: &[Vec<ActivationMask>],
    devices: &DevicePair,
    params: &SimParams,
) -> Result<LatencyBreakdown, Error> {
    if placement.len() != meta.num_layers {
        return Err(Error::DimMismatch {
            expected: meta.num_layers,
            actual: placement.len(),
        });
    }
    check_trace(meta, trace)?;
    let mut tally = Tally::new(meta.num_layers);
    for masks in trace {
        for (l, mask) in masks.iter().enumerate() {
            let t_fast = neuron_time(meta.neuron_bytes[l], devices.fast.bandwidth)?;
            let t_slow = neuron_time(meta.neuron_bytes[l], devices.slow.bandwidth)?;
            let lat = layer_latency(&placement[l], mask, t_fast, t_slow, devices.sync_cost);
            let fast_n = mask.indices().iter().filter(|&&i| placement[l][i]).count() as u64;
            tally.record(l, lat, fast_n, mask.len() as u64 - fast_n);
        }
    }
    Ok(tally.finish(params.predictor_overhead))
}

/// Baseline execution models, mirroring progressively weaker engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BaselineMode {
    /// Whole layers packed onto FAST until capacity; dense compute.
    DenseSplit,
    /// Same layer split, but only masked neurons are computed.
    PoLayerwise,
    /// Neuron-granular placement chosen uniformly at random under the same
    /// byte budget, hybrid timing.
    EngineRandom,
}

/// Greedy whole-layer packing onto FAST under its capacity.
pub fn pack_layers(meta: &ModelMeta, fast_capacity: u64) -> Vec<Unit> {
    let mut used = 0u64;
    (0..meta.num_layers)
        .map(|l| {
            let bytes = meta.layer_bytes(l);
            if used + bytes <= fast_capacity {
                used += bytes;
                Unit::Fast
            } else {
                Unit::Slow
            }
        })
        .collect()
}

/// Uniformly random neuron-granular placement under the FAST byte budget.
pub fn random_placement(meta: &ModelMeta, fast_capacity: u64, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut flat: Vec<(usize, usize)> = (0..meta.num_layers)
        .flat_map(|l| (0..meta.neurons_per_layer).map(move |i| (l, i)))
        .collect();
    flat.shuffle(&mut rng);
    let mut placement = vec![vec![false; meta.neurons_per_layer]; meta.num_layers];
    let mut used = 0u64;
    for (l, i) in flat {
        let bytes = meta.neuron_bytes[l];
        if used + bytes <= fast_capacity {
            used += bytes;
            placement[l][i] = true;
        }
    }
    placement
}

/// Simulates one of the baseline modes over the same trace and byte budget.
pub fn baseline_latency(
    mode: BaselineMode,
    meta: &ModelMeta,
    trace: &[Vec<ActivationMask>],
    devices: &DevicePair,
    params: &SimParams,
    seed: u64,
) -> Result<LatencyBreakdown, Error> {
    check_trace(meta, trace)?;
    match mode {
        BaselineMode::DenseSplit | BaselineMode::PoLayerwise => {
            let owners = pack_layers(meta, devices.fast.mem_capacity);
            let dense = mode == BaselineMode::DenseSplit;
            let mut tally = Tally::new(meta.num_layers);
            for masks in trace {
                for (l, mask) in masks.iter().enumerate() {
                    let computed = if dense {
                        meta.neurons_per_layer as u64
                    } else {
                        mask.len() as u64
                    };
                    let owner_bw = match owners[l] {
                        Unit::Fast => devices.fast.bandwidth,
                        Unit::Slow => devices.slow.bandwidth,
                    };
                    let t = computed as f64 * neuron_time(meta.neuron_bytes[l], owner_bw)?;
                    let lat = match owners[l] {
                        Unit::Fast => LayerLatency {
                            fast_compute: t,
                            ..LayerLatency::default()
                        },
                        Unit::Slow => LayerLatency {
                            slow_compute: t,
                            ..LayerLatency::default()
                        },
                    };
                    let (fast_n, slow_n) = match owners[l] {
                        Unit::Fast => (mask.len() as u64, 0),
                        Unit::Slow => (0, mask.len() as u64),
                    };
                    tally.record(l, lat, fast_n, slow_n);
                }
            }
            // The dense baseline runs no predictors.
            let overhead = if dense { 0.0 } else { params.predictor_overhead };
            Ok(tally.finish(overhead))
        }
        BaselineMode::EngineRandom => {
            let placement = random_placement(meta, devices.fast.mem_capacity, seed);
            simulate(&placement, meta, trace, devices, params)
        }
    }
}

/// Smallest batch size at which transferring a weight block to FAST and
/// computing there beats computing directly on SLOW:
/// `bytes/pcie + b*bytes/fast < b*bytes/slow`. `None` when no batch up to
/// `max_batch` breaks even.
pub fn breakeven_batch(
    block_bytes: u64,
    devices: &DevicePair,
    pcie_bandwidth: f64,
    max_batch: u64,
) -> Result<Option<u64>, Error> {
    if pcie_bandwidth <= 0.0 {
        return Err(Error::ZeroBandwidth);
    }
    let transfer = neuron_time(block_bytes, pcie_bandwidth)?;
    let per_slow = neuron_time(block_bytes, devices.slow.bandwidth)?;
    let per_fast = neuron_time(block_bytes, devices.fast.bandwidth)?;
    let gain = per_slow - per_fast;
    if gain <= 0.0 {
        return Ok(None);
    }
    // Smallest integer strictly greater than transfer / gain.
    let b = libm::floor(transfer / gain) as u64 + 1;
    Ok(if b <= max_batch { Some(b) } else { None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::DeviceSpec;

    fn devices(fast_cap: u64, fast_bw: f64, slow_bw: f64, sync: f64) -> DevicePair {
        DevicePair {
            fast: DeviceSpec {
                mem_capacity: fast_cap,
                bandwidth: fast_bw,
            },
            slow: DeviceSpec {
                mem_capacity: u64::MAX,
                bandwidth: slow_bw,
            },
            sync_cost: sync,
        }
    }

    fn meta(layers: usize, m: usize, bytes: u64) -> ModelMeta {
        ModelMeta {
            num_layers: layers,
            neurons_per_layer: m,
            neuron_bytes: vec![bytes; layers],
        }
    }

    #[test]
    fn all_fast_has_no_sync() {
        let mask = ActivationMask::new(0, vec![0, 2, 3]).unwrap();
        let lat = layer_latency(&[true; 4], &mask, 1e-9, 4e-9, 1e-6);
        assert_eq!(lat.slow_compute, 0.0);
        assert_eq!(lat.sync, 0.0);
        assert_eq!(lat.wall(), 3.0 * 1e-9);
    }

    #[test]
    fn empty_mask_is_free() {
        let lat = layer_latency(&[true; 4], &ActivationMask::empty(0), 1e-9, 4e-9, 1e-6);
        assert_eq!(lat.wall(), 0.0);
    }

    #[test]
    fn even_split_hand_arithmetic() {
        // 4 active, 2 on each side, bw_fast = 10 * bw_slow: wall is the slow
        // side plus one sync.
        let mask = ActivationMask::new(0, vec![0, 1, 2, 3]).unwrap();
        let on_fast = [true, true, false, false];
        let t_slow = 1e-6;
        let t_fast = 1e-7;
        let lat = layer_latency(&on_fast, &mask, t_fast, t_slow, 5e-7);
        assert_eq!(lat.fast_compute, 2.0 * t_fast);
        assert_eq!(lat.slow_compute, 2.0 * t_slow);
        assert_eq!(lat.sync, 5e-7);
        assert_eq!(lat.wall(), 2.0 * t_slow + 5e-7);
    }

    #[test]
    fn simulate_all_fast_policy() {
        let meta = meta(2, 4, 8);
        let placement = vec![vec![true; 4]; 2];
        let trace = vec![vec![
            ActivationMask::new(0, vec![0, 1]).unwrap(),
            ActivationMask::new(1, vec![2]).unwrap(),
        ]];
        let d = devices(u64::MAX, 100.0, 10.0, 1.0);
        let out = simulate(&placement, &meta, &trace, &d, &SimParams::default()).unwrap();
        assert_eq!(out.slow_compute, 0.0);
        assert_eq!(out.sync, 0.0);
        assert_eq!(out.fast_load_share, 1.0);
        assert_eq!(out.fast_active, 3);
    }

    #[test]
    fn conservation_of_active_counts() {
        let meta = meta(3, 8, 4);
        let placement = random_placement(&meta, meta.total_bytes() / 2, 1);
        let trace: Vec<Vec<ActivationMask>> = (0..5)
            .map(|t| {
                (0..3)
                    .map(|l| {
                        ActivationMask::new(l, (0..8).filter(|i| (i + t + l) % 3 == 0).collect())
                            .unwrap()
                    })
                    .collect()
            })
            .collect();
        let total: u64 = trace
            .iter()
            .flat_map(|masks| masks.iter())
            .map(|m| m.len() as u64)
            .sum();
        let d = devices(u64::MAX, 100.0, 10.0, 1e-3);
        let out = simulate(&placement, &meta, &trace, &d, &SimParams::default()).unwrap();
        assert_eq!(out.fast_active + out.slow_active, total);
    }

    #[test]
    fn dense_equals_po_on_full_masks() {
        let meta = meta(4, 8, 4);
        let full_trace = vec![(0..4).map(|l| ActivationMask::full(l, 8)).collect::<Vec<_>>(); 3];
        let d = devices(meta.total_bytes() / 2, 100.0, 10.0, 1e-3);
        let params = SimParams {
            predictor_overhead: 0.0,
        };
        let dense =
            baseline_latency(BaselineMode::DenseSplit, &meta, &full_trace, &d, &params, 0).unwrap();
        let po =
            baseline_latency(BaselineMode::PoLayerwise, &meta, &full_trace, &d, &params, 0).unwrap();
        assert_eq!(dense.total_latency, po.total_latency);
    }

    #[test]
    fn po_on_empty_masks_is_free() {
        let meta = meta(2, 8, 4);
        let trace = vec![(0..2).map(ActivationMask::empty).collect::<Vec<_>>()];
        let d = devices(meta.total_bytes() / 2, 100.0, 10.0, 1e-3);
        let po = baseline_latency(
            BaselineMode::PoLayerwise,
            &meta,
            &trace,
            &d,
            &SimParams::default(),
            0,
        )
        .unwrap();
        assert_eq!(po.total_latency, 0.0);
    }

    #[test]
    fn sync_only_when_both_sides_work() {
        let meta = meta(1, 4, 8);
        // Neurons 0,1 fast; 2,3 slow; mask hits only the fast side.
        let placement = vec![vec![true, true, false, false]];
        let trace = vec![vec![ActivationMask::new(0, vec![0, 1]).unwrap()]];
        let d = devices(u64::MAX, 100.0, 10.0, 7e-4);
        let out = simulate(&placement, &meta, &trace, &d, &SimParams::default()).unwrap();
        assert_eq!(out.sync, 0.0);

        let trace = vec![vec![ActivationMask::new(0, vec![0, 2]).unwrap()]];
        let out = simulate(&placement, &meta, &trace, &d, &SimParams::default()).unwrap();
        assert_eq!(out.sync, 7e-4);
    }

    #[test]
    fn removing_mask_entries_never_slows() {
        let meta = meta(2, 6, 4);
        let placement = vec![vec![true, false, true, false, true, false]; 2];
        let d = devices(u64::MAX, 100.0, 10.0, 1e-4);
        let full: Vec<Vec<ActivationMask>> =
            vec![(0..2).map(|l| ActivationMask::full(l, 6)).collect()];
        let reduced: Vec<Vec<ActivationMask>> =
            vec![(0..2).map(|l| ActivationMask::new(l, vec![0, 3]).unwrap()).collect()];
        let params = SimParams::default();
        let a = simulate(&placement, &meta, &full, &d, &params).unwrap();
        let b = simulate(&placement, &meta, &reduced, &d, &params).unwrap();
        assert!(b.total_latency <= a.total_latency);
    }

    #[test]
    fn breakeven_free_transfer_is_one() {
        let d = devices(0, 1000e9, 38.4e9, 0.0);
        let b = breakeven_batch(64 << 20, &d, f64::INFINITY, 1024).unwrap();
        assert_eq!(b, Some(1));
    }

    #[test]
    fn breakeven_degenerate_has_no_answer() {
        // Slow unit at least as fast per byte: transfer can never pay off.
        let d = devices(0, 38.4e9, 38.4e9, 0.0);
        let b = breakeven_batch(64 << 20, &d, 32e9, 1024).unwrap();
        assert_eq!(b, None);
    }

    #[test]
    fn breakeven_matches_closed_form() {
        let bytes: u64 = 64 << 20;
        let d = devices(0, 1000e9, 38.4e9, 0.0);
        let got = breakeven_batch(bytes, &d, 32e9, 1024).unwrap();
        let transfer = bytes as f64 / 32e9;
        let gain = bytes as f64 / 38.4e9 - bytes as f64 / 1000e9;
        let hand = libm::ceil(transfer / gain) as u64;
        assert_eq!(got, Some(hand));
        assert!(hand > 1);
    }
}
