//! Block-diagonal interaction graph over motif instances.
//!
//! Within a segment, instances at ordinal positions `i != j` are joined with
//! weight `exp(-(i - j)^2 / sigma^2)`. Weights under the pruning threshold
//! are zeroed, then the block is normalized as `D^-1/2 W D^-1/2`. There are
//! never edges between segments.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub sigma: f64,
    pub prune_threshold: f64,
    pub normalize: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            sigma: 1.0,
            prune_threshold: 1e-5,
            normalize: true,
        }
    }
}

/// One diagonal block of the adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGraph {
    /// Global row indices of the members, in onset order.
    pub members: Vec<usize>,
    /// Symmetric, zero diagonal, nonnegative.
    pub weights: DMatrix<f64>,
}

/// Raw Gaussian proximity weights for `n` ordinal positions.
pub fn gaussian_weights(n: usize, sigma: f64, prune_threshold: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        let d = i as f64 - j as f64;
        let w = (-(d * d) / (sigma * sigma)).exp();
        if w < prune_threshold {
            0.0
        } else {
            w
        }
    })
}

/// `D^-1/2 W D^-1/2` with `D` the row sums; rows summing to zero stay zero.
pub fn normalize_symmetric(w: &DMatrix<f64>) -> DMatrix<f64> {
    let scale: Vec<f64> = w
        .row_iter()
        .map(|r| {
            let s = r.sum();
            if s > 0.0 {
                1.0 / s.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        // Evaluate symmetrically so the result is exactly symmetric.
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        scale[a] * w[(a, b)] * scale[b]
    })
}

impl SegmentGraph {
    pub fn new(members: Vec<usize>, config: &GraphConfig) -> Self {
        let raw = gaussian_weights(members.len(), config.sigma, config.prune_threshold);
        let weights = if config.normalize {
            normalize_symmetric(&raw)
        } else {
            raw
        };
        SegmentGraph { members, weights }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Nonzero `(i, j, w)` entries with `i < j`, in local ordinal positions.
    pub fn upper_edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.weights[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn from_upper_edges(members: Vec<usize>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = members.len();
        let mut weights = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::DimensionMismatch(format!(
                    "edge ({i}, {j}) in a segment of {n} instances"
                )));
            }
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
        Ok(SegmentGraph { members, weights })
    }
}

/// Sparse block-diagonal adjacency over `n_instances` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub n_instances: usize,
    pub blocks: Vec<SegmentGraph>,
}

impl Adjacency {
    /// Checks that the blocks partition `0..n_instances`.
    pub fn new(n_instances: usize, blocks: Vec<SegmentGraph>) -> Result<Self> {
        let mut seen = vec![false; n_instances];
        for b in &blocks {
            if b.weights.nrows() != b.len() || b.weights.ncols() != b.len() {
                return Err(Error::DimensionMismatch(
                    "block weights do not match members".into(),
                ));
            }
            for &m in &b.members {
                if m >= n_instances || std::mem::replace(&mut seen[m], true) {
                    return Err(Error::DimensionMismatch(format!(
                        "instance row {m} missing or assigned to two segments"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::DimensionMismatch(format!(
                "instance row {missing} has no segment"
            )));
        }
        Ok(Adjacency {
            n_instances,
            blocks,
        })
    }

    pub fn segment_count(&self) -> usize {
        self.blocks.len()
    }

    /// Segment (block) index of every instance row.
    pub fn segment_index(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_instances];
        for (s, b) in self.blocks.iter().enumerate() {
            for &m in &b.members {
                out[m] = s;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_instances, self.n_instances);
        for b in &self.blocks {
            for (li, &gi) in b.members.iter().enumerate() {
                for (lj, &gj) in b.members.iter().enumerate() {
                    a[(gi, gj)] = b.weights[(li, lj)];
                }
            }
        }
        a
    }
}

/// Builds one block per segment. `segments` lists the global row indices of
/// each segment's instances in onset order.
pub fn build_adjacency(
    n_instances: usize,
    segments: &[Vec<usize>],
    config: &GraphConfig,
) -> Result<Adjacency> {
    let blocks = segments
        .iter()
        .map(|members| SegmentGraph::new(members.clone(), config))
        .collect();
    Adjacency::new(n_instances, blocks)
}
