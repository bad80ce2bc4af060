//! Core primitives for neuron-granular hybrid inference at desk scale.
//!
//! The crate models a toy transformer MLP stack whose activation sparsity is
//! exact (ReLU / ReGLU gating), profiles per-neuron activation frequency over
//! a corpus, trains adaptively sized activation-mask predictors, solves the
//! two-tier (fast-small / slow-large) neuron placement problem as an integer
//! linear program, and predicts end-to-end latency with a memory-bandwidth
//! cost model.
//!
//! Everything in here is pure computation over `alloc` collections: no IO, no
//! threads, no clocks. The companion `neursplit` crate adds the hybrid DAG
//! executor, file formats, and the command-line tool on top.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod error;
pub mod model;
pub mod ops;
pub mod placement;
pub mod predictor;
pub mod profile;
pub mod sim;
pub mod synth;

pub use error::Error;
pub use model::{
    dense_mlp_forward, Activation, ActivationMask, LayerWeights, Matrix, Model, ModelConfig,
    NeuronId,
};
pub use ops::{merge_partials, sparse_fc1_rows, sparse_fc2_cols, OpCount, SparseVec};
pub use placement::{
    DevicePair, DeviceSpec, NeuronBatch, PlacementInstance, PlacementPolicy, SolveStatus,
    SplitThreshold, Unit,
};
pub use profile::{ActivationStats, CdfCurve};
