//! Crate-wide error type.

use core::fmt;

/// Errors produced by the core primitives.
///
/// Shape and dimension errors carry the expected/actual values so callers can
/// report exactly which tensor disagreed.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A weight matrix does not have the shape required by the model config.
    ShapeMismatch {
        layer: usize,
        name: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    /// A vector length does not match the expected dimension.
    DimMismatch { expected: usize, actual: usize },
    /// A neuron index is outside `[0, bound)`.
    IndexOutOfRange { index: usize, bound: usize },
    /// Mask or sparse-vector indices are not strictly ascending.
    NotAscending,
    /// A sparse vector's support contains an index missing from the mask.
    SupportOutsideMask { index: usize },
    /// Invalid model or generator configuration.
    InvalidConfig(&'static str),
    /// The profiling corpus is empty.
    EmptyCorpus,
    /// No activations were recorded, so distribution queries are undefined.
    NoActivations,
    /// A coverage or top-fraction argument is outside its valid range.
    FractionOutOfRange { value: f64 },
    /// Two statistics objects describe different neuron universes.
    UniverseMismatch,
    /// A device bandwidth is zero or negative.
    ZeroBandwidth,
    /// The predictor training dataset is empty or too small to split.
    EmptyDataset,
    /// The instance is too large for exhaustive enumeration.
    InstanceTooLarge { batches: usize, limit: usize },
    /// Batches do not partition the neuron universe.
    BadBatchCover(&'static str),
    /// The model cannot fit in the combined memory of both devices.
    Infeasible {
        required_bytes: u64,
        capacity_bytes: u64,
    },
    /// The solver was stopped before finding any feasible assignment.
    NoIncumbent,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                layer,
                name,
                expected,
                actual,
            } => write!(
                f,
                "layer {layer}: {name} has shape {}x{}, expected {}x{}",
                actual.0, actual.1, expected.0, expected.1
            ),
            Error::DimMismatch { expected, actual } => {
                write!(f, "vector length {actual}, expected {expected}")
            }
            Error::IndexOutOfRange { index, bound } => {
                write!(f, "neuron index {index} out of range (bound {bound})")
            }
            Error::NotAscending => write!(f, "indices must be strictly ascending"),
            Error::SupportOutsideMask { index } => {
                write!(f, "sparse value at index {index} is outside the mask")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptyCorpus => write!(f, "profiling corpus is empty"),
            Error::NoActivations => write!(f, "no activations profiled"),
            Error::FractionOutOfRange { value } => {
                write!(f, "fraction {value} outside (0, 1]")
            }
            Error::UniverseMismatch => write!(f, "statistics cover different neuron universes"),
            Error::ZeroBandwidth => write!(f, "bandwidth must be positive"),
            Error::EmptyDataset => write!(f, "training dataset is empty or too small to split"),
            Error::InstanceTooLarge { batches, limit } => {
                write!(f, "{batches} batches exceed enumeration limit {limit}")
            }
            Error::BadBatchCover(msg) => write!(f, "batches do not cover the model: {msg}"),
            Error::Infeasible {
                required_bytes,
                capacity_bytes,
            } => write!(
                f,
                "model needs {required_bytes} B but combined capacity is {capacity_bytes} B \
                 (short by {} B)",
                required_bytes.saturating_sub(*capacity_bytes)
            ),
            Error::NoIncumbent => {
                write!(f, "solver stopped before any feasible assignment was found")
            }
        }
    }
}

impl core::error::Error for Error {}
