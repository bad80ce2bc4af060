//! Offline neuron-placement policy solver.
//!
//! Neurons are weighted by profiled activation frequency (their impact),
//! grouped into impact-adjacent batches per layer, and assigned to the FAST
//! or SLOW unit by an exact branch-and-bound search over LP relaxations. The
//! constraint system: every batch on exactly one unit, per-unit memory
//! capacity, and a per-layer conditional split — a layer's FAST-side neuron
//! count is either zero or at least the minimum needed to amortize one
//! inter-unit synchronization.

mod simplex;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;
use crate::profile::ActivationStats;
use simplex::{Constraint, LpOutcome, Rel};

/// Default solver batch size in neurons.
pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Largest instance `brute_force_solve` will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 24;

/// The two processing-unit roles of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Unit {
    /// Small, high-bandwidth memory (GPU role).
    Fast,
    /// Large, low-bandwidth memory (CPU role).
    Slow,
}

/// One processing unit's memory system.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviceSpec {
    pub mem_capacity: u64,
    /// Bytes per second.
    pub bandwidth: f64,
}

/// The FAST/SLOW pair plus the cost of one intra-layer synchronization.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DevicePair {
    pub fast: DeviceSpec,
    pub slow: DeviceSpec,
    /// Seconds per synchronization between the units.
    pub sync_cost: f64,
}

impl DevicePair {
    pub fn validate(&self) -> Result<(), Error> {
        if self.fast.bandwidth <= 0.0 || self.slow.bandwidth <= 0.0 {
            return Err(Error::ZeroBandwidth);
        }
        if self.sync_cost < 0.0 {
            return Err(Error::InvalidConfig("sync_cost must be >= 0"));
        }
        Ok(())
    }

    pub fn capacity(&self, unit: Unit) -> u64 {
        match unit {
            Unit::Fast => self.fast.mem_capacity,
            Unit::Slow => self.slow.mem_capacity,
        }
    }
}

/// Group of impact-adjacent neurons from one layer, the unit of placement.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NeuronBatch {
    pub layer: usize,
    /// Neuron indices within the layer, ascending.
    pub members: Vec<usize>,
    /// Sum of member impacts.
    pub impact: f64,
    /// Sum of member weight bytes.
    pub mem_bytes: u64,
}

impl NeuronBatch {
    pub fn count(&self) -> usize {
        self.members.len()
    }
}

/// Per-layer minimum FAST-side neuron count that amortizes one sync.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SplitThreshold {
    /// Splitting pays off once this many neurons sit on FAST.
    Neurons(u64),
    /// The fast unit is no faster per neuron: no split can amortize the sync,
    /// the layer must stay wholly on SLOW.
    NoSplit,
}

/// Per-layer split state in a policy: `y` says whether the layer puts any
/// neurons on FAST, `threshold` is the minimum that makes that worthwhile.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerSplit {
    pub y: bool,
    pub threshold: SplitThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SolveStatus {
    /// Proven optimal.
    Optimal,
    /// Best incumbent when the search was stopped early.
    Feasible,
    /// No feasible assignment exists.
    Infeasible,
}

/// The solver's output: a device per batch plus per-layer split metadata.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlacementPolicy {
    /// Device per batch, index-aligned with the instance's batch list.
    pub assignment: Vec<Unit>,
    pub layers: Vec<LayerSplit>,
    /// Sum of FAST-assigned batch impacts.
    pub objective: f64,
    pub status: SolveStatus,
}

/// A complete, validated placement problem: batches that partition the
/// neuron universe plus per-layer split thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementInstance {
    batches: Vec<NeuronBatch>,
    thresholds: Vec<SplitThreshold>,
    num_layers: usize,
    neurons_per_layer: usize,
}

impl PlacementInstance {
    /// Validates that the batches partition `num_layers x neurons_per_layer`.
    pub fn new(
        batches: Vec<NeuronBatch>,
        thresholds: Vec<SplitThreshold>,
        num_layers: usize,
        neurons_per_layer: usize,
    ) -> Result<Self, Error> {
        if thresholds.len() != num_layers {
            return Err(Error::BadBatchCover("one threshold required per layer"));
        }
        let mut seen = vec![false; num_layers * neurons_per_layer];
        for b in &batches {
            if b.layer >= num_layers {
                return Err(Error::BadBatchCover("batch layer out of range"));
            }
            for &i in &b.members {
                if i >= neurons_per_layer {
                    return Err(Error::BadBatchCover("batch member out of range"));
                }
                let flat = b.layer * neurons_per_layer + i;
                if seen[flat] {
                    return Err(Error::BadBatchCover("neuron appears in two batches"));
                }
                seen[flat] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::BadBatchCover("some neurons are not batched"));
        }
        Ok(PlacementInstance {
            batches,
            thresholds,
            num_layers,
            neurons_per_layer,
        })
    }

    /// Batches every layer of a model and derives the per-layer thresholds
    /// from the device pair.
    pub fn build(
        impacts: &[f64],
        num_layers: usize,
        neurons_per_layer: usize,
        neuron_bytes: &[u64],
        batch_size: usize,
        devices: &DevicePair,
    ) -> Result<Self, Error> {
        if impacts.len() != num_layers * neurons_per_layer {
            return Err(Error::DimMismatch {
                expected: num_layers * neurons_per_layer,
                actual: impacts.len(),
            });
        }
        if neuron_bytes.len() != num_layers {
            return Err(Error::DimMismatch {
                expected: num_layers,
                actual: neuron_bytes.len(),
            });
        }
        let mut batches = Vec::new();
        let mut thresholds = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let layer_impacts = &impacts[l * neurons_per_layer..(l + 1) * neurons_per_layer];
            batches.extend(batch_neurons(l, layer_impacts, neuron_bytes[l], batch_size)?);
            thresholds.push(min_fast_neurons(neuron_bytes[l], devices)?);
        }
        PlacementInstance::new(batches, thresholds, num_layers, neurons_per_layer)
    }

    pub fn batches(&self) -> &[NeuronBatch] {
        &self.batches
    }

    pub fn thresholds(&self) -> &[SplitThreshold] {
        &self.thresholds
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn neurons_per_layer(&self) -> usize {
        self.neurons_per_layer
    }

    pub fn total_bytes(&self) -> u64 {
        self.batches.iter().map(|b| b.mem_bytes).sum()
    }

    /// Canonical objective: FAST-assigned impacts summed in batch order.
    pub fn objective_of(&self, assignment: &[Unit]) -> f64 {
        self.batches
            .iter()
            .zip(assignment)
            .filter(|(_, &u)| u == Unit::Fast)
            .map(|(b, _)| b.impact)
            .sum()
    }

    fn fast_counts(&self, assignment: &[Unit]) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_layers];
        for (b, &u) in self.batches.iter().zip(assignment) {
            if u == Unit::Fast {
                counts[b.layer] += b.count() as u64;
            }
        }
        counts
    }

    fn mem_used(&self, assignment: &[Unit], unit: Unit) -> u64 {
        self.batches
            .iter()
            .zip(assignment)
            .filter(|(_, &u)| u == unit)
            .map(|(b, _)| b.mem_bytes)
            .sum()
    }
}

/// Neuron impact from profiled statistics: the activation frequency
/// `counts[n] / total_inputs`, in layer-major neuron order.
pub fn impact(stats: &ActivationStats) -> Vec<f64> {
    let total = stats.total_inputs();
    stats
        .counts()
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
        .collect()
}

/// Time to compute one neuron on a unit: the time to stream its weights once.
pub fn neuron_time(mem_bytes: u64, bandwidth: f64) -> Result<f64, Error> {
    if bandwidth <= 0.0 {
        return Err(Error::ZeroBandwidth);
    }
    Ok(mem_bytes as f64 / bandwidth)
}

/// Minimum FAST-side neuron count for a layer under which one sync
/// amortizes: smallest `C` with `C * t_fast + sync <= C * t_slow`.
pub fn min_fast_neurons(neuron_bytes: u64, devices: &DevicePair) -> Result<SplitThreshold, Error> {
    let t_fast = neuron_time(neuron_bytes, devices.fast.bandwidth)?;
    let t_slow = neuron_time(neuron_bytes, devices.slow.bandwidth)?;
    if devices.sync_cost <= 0.0 {
        return Ok(SplitThreshold::Neurons(0));
    }
    let gain = t_slow - t_fast;
    if gain <= 0.0 {
        return Ok(SplitThreshold::NoSplit);
    }
    Ok(SplitThreshold::Neurons(
        libm::ceil(devices.sync_cost / gain) as u64
    ))
}

/// Sorts a layer's neurons by descending impact (ties by ascending index)
/// and chunks them into batches; "similar impact" is adjacency in that order.
pub fn batch_neurons(
    layer: usize,
    impacts: &[f64],
    neuron_bytes: u64,
    batch_size: usize,
) -> Result<Vec<NeuronBatch>, Error> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..impacts.len()).collect();
    order.sort_unstable_by(|&a, &b| impacts[b].total_cmp(&impacts[a]).then(a.cmp(&b)));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let mut members = chunk.to_vec();
            members.sort_unstable();
            let impact = members.iter().map(|&i| impacts[i]).sum();
            NeuronBatch {
                layer,
                members,
                impact,
                mem_bytes: neuron_bytes * chunk.len() as u64,
            }
        })
        .collect())
}

/// A broken placement constraint. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// The assignment vector does not give every batch exactly one device.
    AssignmentArity { expected: usize, actual: usize },
    /// The policy's per-layer metadata does not cover every layer.
    LayerArity { expected: usize, actual: usize },
    /// A unit holds more bytes than its capacity.
    CapacityExceeded {
        unit: Unit,
        used_bytes: u64,
        capacity_bytes: u64,
    },
    /// The policy's recorded threshold differs from the device-derived one.
    ThresholdMismatch { layer: usize },
    /// An open layer (`y = 1`) holds fewer FAST neurons than its minimum.
    BelowMinSplit {
        layer: usize,
        fast_neurons: u64,
        required: SplitThreshold,
    },
    /// A closed layer (`y = 0`) still has neurons on FAST.
    ClosedLayerNotEmpty { layer: usize, fast_neurons: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AssignmentArity { expected, actual } => write!(
                f,
                "exactly-one-assignment: {actual} assignments for {expected} batches"
            ),
            Violation::LayerArity { expected, actual } => {
                write!(f, "layer metadata: {actual} entries for {expected} layers")
            }
            Violation::CapacityExceeded {
                unit,
                used_bytes,
                capacity_bytes,
            } => write!(
                f,
                "memory capacity: {unit:?} holds {used_bytes} B of {capacity_bytes} B"
            ),
            Violation::ThresholdMismatch { layer } => write!(
                f,
                "min-split threshold: layer {layer} records a different threshold than the devices imply"
            ),
            Violation::BelowMinSplit {
                layer,
                fast_neurons,
                required,
            } => write!(
                f,
                "conditional split: layer {layer} is open with {fast_neurons} FAST neurons, below {required:?}"
            ),
            Violation::ClosedLayerNotEmpty {
                layer,
                fast_neurons,
            } => write!(
                f,
                "conditional split: layer {layer} is closed but has {fast_neurons} FAST neurons"
            ),
        }
    }
}

/// Checks a policy against the full constraint system; empty result means
/// every constraint holds.
pub fn validate(
    policy: &PlacementPolicy,
    instance: &PlacementInstance,
    devices: &DevicePair,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    if policy.assignment.len() != instance.batches.len() {
        violations.push(Violation::AssignmentArity {
            expected: instance.batches.len(),
            actual: policy.assignment.len(),
        });
        return violations;
    }
    if policy.layers.len() != instance.num_layers {
        violations.push(Violation::LayerArity {
            expected: instance.num_layers,
            actual: policy.layers.len(),
        });
        return violations;
    }

    for unit in [Unit::Fast, Unit::Slow] {
        let used = instance.mem_used(&policy.assignment, unit);
        let cap = devices.capacity(unit);
        if used > cap {
            violations.push(Violation::CapacityExceeded {
                unit,
                used_bytes: used,
                capacity_bytes: cap,
            });
        }
    }

    let counts = instance.fast_counts(&policy.assignment);
    for l in 0..instance.num_layers {
        let split = policy.layers[l];
        if split.threshold != instance.thresholds[l] {
            violations.push(Violation::ThresholdMismatch { layer: l });
        }
        let count = counts[l];
        if split.y {
            match split.threshold {
                SplitThreshold::Neurons(c) if count >= c => {}
                required => violations.push(Violation::BelowMinSplit {
                    layer: l,
                    fast_neurons: count,
                    required,
                }),
            }
        } else if count > 0 {
            violations.push(Violation::ClosedLayerNotEmpty {
                layer: l,
                fast_neurons: count,
            });
        }
    }
    violations
}

/// Expands a batch-level policy to per-layer boolean rows (`true` = FAST).
pub fn expand_assignment(
    policy: &PlacementPolicy,
    instance: &PlacementInstance,
) -> Result<Vec<Vec<bool>>, Error> {
    if policy.assignment.len() != instance.batches.len() {
        return Err(Error::DimMismatch {
            expected: instance.batches.len(),
            actual: policy.assignment.len(),
        });
    }
    let mut rows = vec![vec![false; instance.neurons_per_layer]; instance.num_layers];
    for (b, &unit) in instance.batches.iter().zip(&policy.assignment) {
        if unit == Unit::Fast {
            for &i in &b.members {
                rows[b.layer][i] = true;
            }
        }
    }
    Ok(rows)
}

fn layer_splits_for(instance: &PlacementInstance, assignment: &[Unit]) -> Vec<LayerSplit> {
    instance
        .fast_counts(assignment)
        .iter()
        .zip(&instance.thresholds)
        .map(|(&count, &threshold)| LayerSplit {
            y: count > 0,
            threshold,
        })
        .collect()
    }

fn assignment_feasible(
    instance: &PlacementInstance,
    devices: &DevicePair,
    assignment: &[Unit],
) -> bool {
    if instance.mem_used(assignment, Unit::Fast) > devices.fast.mem_capacity {
        return false;
    }
    if instance.mem_used(assignment, Unit::Slow) > devices.slow.mem_capacity {
        return false;
    }
    for (l, &count) in instance.fast_counts(assignment).iter().enumerate() {
        if count == 0 {
            continue;
        }
        match instance.thresholds[l] {
            SplitThreshold::Neurons(c) if count >= c => {}
            _ => return false,
        }
    }
    true
}

/// Exhaustive enumeration over all `2^B` assignments; the verification
/// oracle for the branch-and-bound solver on small instances.
pub fn brute_force_solve(
    instance: &PlacementInstance,
    devices: &DevicePair,
) -> Result<PlacementPolicy, Error> {
    let b = instance.batches.len();
    if b > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            batches: b,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    check_total_capacity(instance, devices)?;

    let mut best: Option<(f64, Vec<Unit>)> = None;
    let mut assignment = vec![Unit::Slow; b];
    for mask in 0u64..(1u64 << b) {
        for (i, slot) in assignment.iter_mut().enumerate() {
            *slot = if mask >> i & 1 == 1 {
                Unit::Fast
            } else {
                Unit::Slow
            };
        }
        if !assignment_feasible(instance, devices, &assignment) {
            continue;
        }
        let obj = instance.objective_of(&assignment);
        if best.as_ref().map_or(true, |(b_obj, _)| obj > *b_obj) {
            best = Some((obj, assignment.clone()));
        }
    }
    let (objective, assignment) = best.ok_or(Error::NoIncumbent)?;
    Ok(PlacementPolicy {
        layers: layer_splits_for(instance, &assignment),
        assignment,
        objective,
        status: SolveStatus::Optimal,
    })
}

fn check_total_capacity(instance: &PlacementInstance, devices: &DevicePair) -> Result<(), Error> {
    let total = instance.total_bytes();
    let combined = devices.fast.mem_capacity.saturating_add(devices.slow.mem_capacity);
    if total > combined {
        return Err(Error::Infeasible {
            required_bytes: total,
            capacity_bytes: combined,
        });
    }
    Ok(())
}

/// Solver knobs. `max_nodes` bounds the search; when it is hit with an
/// incumbent in hand the policy comes back as `Feasible` instead of
/// `Optimal`.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_nodes: u64,
    pub eps: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_nodes: 500_000,
            eps: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerState {
    Undecided,
    Closed,
    Open,
}

#[derive(Debug, Clone)]
struct Node {
    fixed: Vec<Option<Unit>>,
    layer_state: Vec<LayerState>,
    bound: f64,
    depth: u32,
    id: u64,
}

/// Exact branch-and-bound with LP-relaxation bounds, best-bound node
/// selection, deeper-node tie-break.
pub fn solve(
    instance: &PlacementInstance,
    devices: &DevicePair,
    opts: &SolveOptions,
) -> Result<PlacementPolicy, Error> {
    solve_with_stop(instance, devices, opts, || false)
}

/// [`solve`] with an external stop signal (a deadline, typically), polled
/// once per node.
pub fn solve_with_stop(
    instance: &PlacementInstance,
    devices: &DevicePair,
    opts: &SolveOptions,
    mut stop: impl FnMut() -> bool,
) -> Result<PlacementPolicy, Error> {
    devices.validate()?;
    check_total_capacity(instance, devices)?;
    let b = instance.batches.len();

    // All-SLOW is the natural starting incumbent when it fits.
    let mut incumbent: Option<(f64, Vec<Unit>)> = None;
    let all_slow = vec![Unit::Slow; b];
    if assignment_feasible(instance, devices, &all_slow) {
        incumbent = Some((instance.objective_of(&all_slow), all_slow));
    }

    let mut next_id = 0u64;
    let mut heap: Vec<Node> = Vec::new();
    let root = Node {
        fixed: vec![None; b],
        layer_state: vec![LayerState::Undecided; instance.num_layers],
        bound: f64::INFINITY,
        depth: 0,
        id: next_id,
    };
    next_id += 1;
    heap.push(root);

    let mut nodes_visited = 0u64;
    let mut stopped = false;

    while let Some(pos) = best_node(&heap) {
        let node = heap.swap_remove(pos);
        nodes_visited += 1;
        if nodes_visited > opts.max_nodes || stop() {
            stopped = true;
            break;
        }
        if let Some((best_obj, _)) = &incumbent {
            if node.bound <= best_obj + opts.eps {
                continue;
            }
        }

        let Some(relaxation) = node_lp(instance, devices, &node) else {
            continue; // infeasible subproblem
        };
        let (x, bound) = match relaxation {
            LpOutcome::Optimal { x, objective } => {
                let fixed_impact: f64 = instance
                    .batches
                    .iter()
                    .zip(&node.fixed)
                    .filter(|(_, f)| **f == Some(Unit::Fast))
                    .map(|(batch, _)| batch.impact)
                    .sum();
                (x, objective + fixed_impact)
            }
            LpOutcome::Infeasible => continue,
            // The box constraints make the LP bounded; treat defensively.
            LpOutcome::Unbounded => (vec![], f64::INFINITY),
        };
        if let Some((best_obj, _)) = &incumbent {
            if bound <= best_obj + opts.eps {
                continue;
            }
        }

        // Map LP values back onto batch indices.
        let mut values = vec![0.0f64; b];
        {
            let mut vi = 0;
            for (i, f) in node.fixed.iter().enumerate() {
                match f {
                    Some(Unit::Fast) => values[i] = 1.0,
                    Some(Unit::Slow) => values[i] = 0.0,
                    None => {
                        values[i] = x.get(vi).copied().unwrap_or(0.0);
                        vi += 1;
                    }
                }
            }
        }

        // Branch on the most fractional batch, if any.
        let fractional = (0..b)
            .filter(|&i| node.fixed[i].is_none())
            .map(|i| (i, values[i].min(1.0 - values[i])))
            .filter(|(_, f)| *f > 1e-6)
            .max_by(|(i, a), (j, b)| a.total_cmp(b).then(j.cmp(i)));
        if let Some((idx, _)) = fractional {
            for unit in [Unit::Fast, Unit::Slow] {
                let mut child = node.clone();
                child.fixed[idx] = Some(unit);
                child.bound = bound;
                child.depth = node.depth + 1;
                child.id = next_id;
                next_id += 1;
                heap.push(child);
            }
            continue;
        }

        // Integral: check undecided layers for the 0-or-at-least-C condition.
        let assignment: Vec<Unit> = values
            .iter()
            .map(|&v| if v > 0.5 { Unit::Fast } else { Unit::Slow })
            .collect();
        let counts = instance.fast_counts(&assignment);
        let violating = (0..instance.num_layers).find(|&l| {
            node.layer_state[l] == LayerState::Undecided
                && counts[l] > 0
                && match instance.thresholds[l] {
                    SplitThreshold::Neurons(c) => counts[l] < c,
                    SplitThreshold::NoSplit => true,
                }
        });
        if let Some(l) = violating {
            // Closed child: the whole layer goes SLOW.
            let mut closed = node.clone();
            closed.layer_state[l] = LayerState::Closed;
            for (i, batch) in instance.batches.iter().enumerate() {
                if batch.layer == l {
                    match closed.fixed[i] {
                        None => closed.fixed[i] = Some(Unit::Slow),
                        Some(Unit::Slow) => {}
                        // Contradicts an earlier FAST fix: prune by capacity.
                        Some(Unit::Fast) => {
                            closed.fixed[i] = Some(Unit::Fast);
                        }
                    }
                }
            }
            let closed_ok = !instance
                .batches
                .iter()
                .enumerate()
                .any(|(i, batch)| batch.layer == l && closed.fixed[i] == Some(Unit::Fast));
            closed.bound = bound;
            closed.depth = node.depth + 1;
            closed.id = next_id;
            next_id += 1;
            if closed_ok {
                heap.push(closed);
            }

            // Open child only when the minimum is reachable at all.
            if let SplitThreshold::Neurons(c) = instance.thresholds[l] {
                let layer_total: u64 = instance
                    .batches
                    .iter()
                    .filter(|batch| batch.layer == l)
                    .map(|batch| batch.count() as u64)
                    .sum();
                if c <= layer_total {
                    let mut open = node.clone();
                    open.layer_state[l] = LayerState::Open;
                    open.bound = bound;
                    open.depth = node.depth + 1;
                    open.id = next_id;
                    next_id += 1;
                    heap.push(open);
                }
            }
            continue;
        }

        // Feasible integral solution.
        if assignment_feasible(instance, devices, &assignment) {
            let obj = instance.objective_of(&assignment);
            if incumbent.as_ref().map_or(true, |(best, _)| obj > best + opts.eps) {
                incumbent = Some((obj, assignment));
            }
        }
    }

    let (objective, assignment) = incumbent.ok_or(Error::NoIncumbent)?;
    Ok(PlacementPolicy {
        layers: layer_splits_for(instance, &assignment),
        assignment,
        objective,
        status: if stopped {
            SolveStatus::Feasible
        } else {
            SolveStatus::Optimal
        },
    })
}

/// Best-bound node, ties broken by depth (deeper first) then id.
fn best_node(heap: &[Node]) -> Option<usize> {
    heap.iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            a.bound
                .total_cmp(&b.bound)
                .then(a.depth.cmp(&b.depth))
                .then(b.id.cmp(&a.id))
        })
        .map(|(i, _)| i)
}

/// LP relaxation of a node over its free batches. `None` means the node is
/// infeasible before the LP is even built.
fn node_lp(
    instance: &PlacementInstance,
    devices: &DevicePair,
    node: &Node,
) -> Option<LpOutcome> {
    let free: Vec<usize> = (0..instance.batches.len())
        .filter(|&i| node.fixed[i].is_none())
        .collect();
    let n = free.len();

    let mut fixed_fast_mem = 0u64;
    let mut fixed_slow_mem = 0u64;
    for (i, f) in node.fixed.iter().enumerate() {
        match f {
            Some(Unit::Fast) => fixed_fast_mem += instance.batches[i].mem_bytes,
            Some(Unit::Slow) => fixed_slow_mem += instance.batches[i].mem_bytes,
            None => {}
        }
    }
    if fixed_fast_mem > devices.fast.mem_capacity || fixed_slow_mem > devices.slow.mem_capacity {
        return None;
    }

    let obj: Vec<f64> = free.iter().map(|&i| instance.batches[i].impact).collect();
    let mut rows: Vec<Constraint> = Vec::new();

    // FAST capacity.
    let fast_room = (devices.fast.mem_capacity - fixed_fast_mem) as f64;
    rows.push(Constraint {
        coeffs: free
            .iter()
            .map(|&i| instance.batches[i].mem_bytes as f64)
            .collect(),
        rel: Rel::Le,
        rhs: fast_room,
    });

    // SLOW capacity, rewritten as a floor on the FAST side.
    let free_mem: u64 = free.iter().map(|&i| instance.batches[i].mem_bytes).sum();
    let slow_room = devices.slow.mem_capacity - fixed_slow_mem;
    if free_mem > slow_room {
        let floor = (free_mem - slow_room) as f64;
        rows.push(Constraint {
            coeffs: free
                .iter()
                .map(|&i| instance.batches[i].mem_bytes as f64)
                .collect(),
            rel: Rel::Ge,
            rhs: floor,
        });
    }

    // Open layers must reach their minimum FAST count.
    for (l, state) in node.layer_state.iter().enumerate() {
        if *state != LayerState::Open {
            continue;
        }
        let SplitThreshold::Neurons(c) = instance.thresholds[l] else {
            return None;
        };
        let fixed_count: u64 = instance
            .batches
            .iter()
            .enumerate()
            .filter(|(i, batch)| batch.layer == l && node.fixed[*i] == Some(Unit::Fast))
            .map(|(_, batch)| batch.count() as u64)
            .sum();
        if fixed_count >= c {
            continue;
        }
        let need = (c - fixed_count) as f64;
        let coeffs: Vec<f64> = free
            .iter()
            .map(|&i| {
                if instance.batches[i].layer == l {
                    instance.batches[i].count() as f64
                } else {
                    0.0
                }
            })
            .collect();
        if coeffs.iter().sum::<f64>() < need {
            return None; // cannot reach the minimum even with everything free
        }
        rows.push(Constraint {
            coeffs,
            rel: Rel::Ge,
            rhs: need,
        });
    }

    // Unit upper bounds.
    for v in 0..n {
        let mut coeffs = vec![0.0; n];
        coeffs[v] = 1.0;
        rows.push(Constraint {
            coeffs,
            rel: Rel::Le,
            rhs: 1.0,
        });
    }

    Some(simplex::maximize(&obj, &rows))
}
