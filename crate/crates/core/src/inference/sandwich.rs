use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::crf::{grouped_scores, pl_hessian, CrfProblem, ModelSpec, ParamLayout, Penalty};
use crate::error::{Error, Result};

/// Independent units for the score covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreClusters {
    Segment,
    /// Sensitivity analysis only: ignores within-segment dependence.
    Instance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCovariance {
    /// `H^-1 J H^-1`.
    pub g: DMatrix<f64>,
    /// Observed Hessian of the unpenalized pseudo-log-likelihood.
    pub h: DMatrix<f64>,
    /// Sum of outer products of clustered scores.
    pub j: DMatrix<f64>,
    /// Ridge added to `-H` to make it invertible, zero if none was needed.
    pub jitter: f64,
}

impl SandwichCovariance {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.g
            .diagonal()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    }
}

/// `H^-1 J H^-1` for a negative definite `H`, solving with the Cholesky
/// factor of `-H + jitter I`.
pub fn sandwich(h: &DMatrix<f64>, j: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    let d = h.nrows();
    if h.shape() != (d, d) || j.shape() != (d, d) {
        return Err(Error::DimensionMismatch(
            "sandwich factors must be square and equal".into(),
        ));
    }
    let info = -h + DMatrix::identity(d, d) * jitter;
    // Pivots at rounding level count as singular, not only exact zeros.
    let scale = info.diagonal().amax();
    let pivot_floor = f64::EPSILON * scale * d as f64;
    let chol = Cholesky::new(info.clone())
        .filter(|c| c.l_dirty().diagonal().iter().all(|l| l * l > pivot_floor));
    let Some(chol) = chol else {
        let min_eigenvalue = SymmetricEigen::new(info)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v));
        return Err(Error::SingularHessian { min_eigenvalue });
    };
    // (-H)^-1 J (-H)^-1 equals H^-1 J H^-1.
    let left = chol.solve(j);
    let g = chol.solve(&left.transpose());
    Ok((&g + g.transpose()) * 0.5)
}

/// Godambe covariance of the free parameters at `theta`.
pub fn godambe_covariance(
    problem: &CrfProblem,
    spec: ModelSpec,
    theta: &[f64],
    clusters: ScoreClusters,
    jitter: f64,
) -> Result<SandwichCovariance> {
    let layout = ParamLayout::new(problem.n_features(), problem.q(), spec);
    let h = pl_hessian(problem, &layout, theta, Penalty::NONE)?;
    let scores = match clusters {
        ScoreClusters::Segment => {
            let index = problem.segment_index();
            grouped_scores(problem, &layout, theta, &index, problem.segments.len())?
        }
        ScoreClusters::Instance => {
            let index: Vec<usize> = (0..problem.n()).collect();
            grouped_scores(problem, &layout, theta, &index, problem.n())?
        }
    };
    let j = scores.tr_mul(&scores);
    let g = sandwich(&h, &j, jitter)?;
    Ok(SandwichCovariance { g, h, j, jitter })
}
