use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients estimated from fewer informative segments than these
/// bounds are flagged.
pub const ESS_WARN: usize = 50;
pub const ESS_SEVERE: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssReport {
    /// Number of segments.
    pub unary_ess: usize,
    /// Segments in which label `q` or label `r` is active somewhere.
    pub pairwise_ess: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EssFlag {
    Ok,
    Below50,
    Below30,
}

impl EssFlag {
    pub fn of(ess: usize) -> Self {
        if ess < ESS_SEVERE {
            EssFlag::Below30
        } else if ess < ESS_WARN {
            EssFlag::Below50
        } else {
            EssFlag::Ok
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EssFlag::Ok => "",
            EssFlag::Below50 => "ess<50",
            EssFlag::Below30 => "ess<30",
        }
    }
}

pub fn effective_sample_size(
    y: &DMatrix<f64>,
    segment_index: &[usize],
    n_segments: usize,
) -> Result<EssReport> {
    if segment_index.len() != y.nrows() {
        return Err(Error::DimensionMismatch("segment index length".into()));
    }
    let q = y.ncols();
    let mut active = vec![vec![false; q]; n_segments];
    for (i, &s) in segment_index.iter().enumerate() {
        if s >= n_segments {
            return Err(Error::DimensionMismatch(format!(
                "segment {s} out of range"
            )));
        }
        for l in 0..q {
            if y[(i, l)] != 0.0 {
                active[s][l] = true;
            }
        }
    }
    let mut pairwise_ess = vec![vec![0; q]; q];
    for seg in &active {
        for a in 0..q {
            for b in 0..q {
                if seg[a] || seg[b] {
                    pairwise_ess[a][b] += 1;
                }
            }
        }
    }
    Ok(EssReport {
        unary_ess: n_segments,
        pairwise_ess,
    })
}
