//! Neuron-aware sparse operators.
//!
//! These operators touch individual FC1 rows and FC2 columns instead of whole
//! matrices: rows and columns outside the mask are never read. Accumulation
//! order is ascending neuron index everywhere, so a sparse pass with the true
//! mask reproduces the dense reference exactly.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::model::{dot, Activation, ActivationMask, LayerWeights, Matrix};

/// Sparse vector over the `m` neurons of one layer, entries in strictly
/// ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    dim: usize,
    entries: Vec<(usize, f32)>,
}

impl SparseVec {
    pub fn new(dim: usize, entries: Vec<(usize, f32)>) -> Result<Self, Error> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::NotAscending);
        }
        if let Some(&(last, _)) = entries.last() {
            if last >= dim {
                return Err(Error::IndexOutOfRange {
                    index: last,
                    bound: dim,
                });
            }
        }
        Ok(SparseVec { dim, entries })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVec {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f32)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Densifies into a length-`dim` vector.
    pub fn to_dense(&self) -> Vec<f32> {
        let mut v = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }
}

/// Work counter for sparse kernels: row/column visits and multiply-accumulate
/// operations actually performed.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCount {
    pub row_dots: u64,
    pub macs: u64,
}

impl OpCount {
    pub fn add(&mut self, other: OpCount) {
        self.row_dots += other.row_dots;
        self.macs += other.macs;
    }
}

/// Computes the post-gate value of every masked neuron from its FC1 (and
/// gate) row. Rows outside the mask are never read.
pub fn sparse_fc1_rows(
    layer: &LayerWeights,
    activation: Activation,
    x: &[f32],
    mask: &ActivationMask,
) -> Result<SparseVec, Error> {
    let mut count = OpCount::default();
    sparse_fc1_rows_counted(layer, activation, x, mask, &mut count)
}

/// [`sparse_fc1_rows`] with work accounting.
pub fn sparse_fc1_rows_counted(
    layer: &LayerWeights,
    activation: Activation,
    x: &[f32],
    mask: &ActivationMask,
    count: &mut OpCount,
) -> Result<SparseVec, Error> {
    let (m, d) = layer.fc1.shape();
    if x.len() != d {
        return Err(Error::DimMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    if let Some(max) = mask.max_index() {
        if max >= m {
            return Err(Error::IndexOutOfRange {
                index: max,
                bound: m,
            });
        }
    }

    let mut entries = Vec::with_capacity(mask.len());
    for &i in mask.indices() {
        let value = match activation {
            Activation::ReLU => {
                count.row_dots += 1;
                count.macs += d as u64;
                let mut z = dot(layer.fc1.row(i), x);
                if let Some(b) = &layer.fc1_bias {
                    z += b[i];
                }
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::ReGLU => {
                let gate = layer
                    .gate
                    .as_ref()
                    .ok_or(Error::InvalidConfig("ReGLU layer is missing its gate matrix"))?;
                count.row_dots += 1;
                count.macs += 2 * d as u64;
                let mut g = dot(gate.row(i), x);
                if let Some(b) = &layer.gate_bias {
                    g += b[i];
                }
                if g > 0.0 {
                    let mut z = dot(layer.fc1.row(i), x);
                    if let Some(b) = &layer.fc1_bias {
                        z += b[i];
                    }
                    g * z
                } else {
                    // Predicted active but the gate disagrees: contributes zero.
                    0.0
                }
            }
        };
        entries.push((i, value));
    }
    Ok(SparseVec { dim: m, entries })
}

/// Accumulates `sum_i h_i * col_i(fc2)` over the sparse support, ascending.
/// Columns outside the mask are never read.
pub fn sparse_fc2_cols(
    fc2: &Matrix,
    h_partial: &SparseVec,
    mask: &ActivationMask,
) -> Result<Vec<f32>, Error> {
    let mut count = OpCount::default();
    sparse_fc2_cols_counted(fc2, h_partial, mask, &mut count)
}

/// [`sparse_fc2_cols`] with work accounting.
pub fn sparse_fc2_cols_counted(
    fc2: &Matrix,
    h_partial: &SparseVec,
    mask: &ActivationMask,
    count: &mut OpCount,
) -> Result<Vec<f32>, Error> {
    let (d, m) = fc2.shape();
    if h_partial.dim() != m {
        return Err(Error::DimMismatch {
            expected: m,
            actual: h_partial.dim(),
        });
    }
    for &(i, _) in h_partial.entries() {
        if !mask.contains(i) {
            return Err(Error::SupportOutsideMask { index: i });
        }
    }

    let mut y = vec![0.0f32; d];
    for &(i, hi) in h_partial.entries() {
        count.row_dots += 1;
        count.macs += d as u64;
        for (j, yj) in y.iter_mut().enumerate() {
            *yj += hi * fc2.get(j, i);
        }
    }
    Ok(y)
}

/// Elementwise sum of the two units' partial outputs.
pub fn merge_partials(fast_part: &[f32], slow_part: &[f32]) -> Result<Vec<f32>, Error> {
    if fast_part.len() != slow_part.len() {
        return Err(Error::DimMismatch {
            expected: fast_part.len(),
            actual: slow_part.len(),
        });
    }
    Ok(fast_part
        .iter()
        .zip(slow_part)
        .map(|(a, b)| a + b)
        .collect())
}
