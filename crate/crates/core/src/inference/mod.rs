//! Sandwich covariance, Wald intervals with BH adjustment, segment-level
//! permutation tests and effective-sample-size diagnostics.

mod clr;
mod ess;
mod sandwich;
mod wald;

use serde::{Deserialize, Serialize};

pub use clr::{
    clr_permutation_test, permutation_p_value, permute_within_segments, ClrConfig, ClrTestResult,
    Comparison, NEGATIVE_CLR_TOLERANCE, PERMUTATION_RNG_SCHEME,
};
pub use ess::{effective_sample_size, EssFlag, EssReport, ESS_SEVERE, ESS_WARN};
pub use sandwich::{godambe_covariance, sandwich, SandwichCovariance, ScoreClusters};
pub use wald::{bh_adjust, wald_intervals, Reference, WaldRow};

use crate::crf::{CrfProblem, FitResult, ParamLayout};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub level: f64,
    /// Use a t reference with `segments - 1` degrees of freedom.
    pub t_reference: bool,
    pub clusters: ScoreClusters,
    /// Ridge retried when the observed Hessian is singular.
    pub jitter: f64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            level: 0.95,
            t_reference: false,
            clusters: ScoreClusters::Segment,
            jitter: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    /// Transformation the coefficient acts on.
    pub label: String,
    /// Feature name for unary effects, partner transformation for pairwise.
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub p: f64,
    /// Absent for intercepts, which are not part of either BH family.
    pub q_bh: Option<f64>,
    pub ess: usize,
    pub ess_flag: EssFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub reference: Reference,
    pub level: f64,
    pub clusters: ScoreClusters,
    pub jitter: f64,
    pub intercepts: Vec<EffectRow>,
    pub unary: Vec<EffectRow>,
    /// Entries `q <= r` of the symmetric interaction matrix.
    pub pairwise: Vec<EffectRow>,
    pub ess: EssReport,
    /// Sandwich covariance of the free coordinates.
    pub covariance: Vec<Vec<f64>>,
}

/// Sandwich covariance with one jittered retry on a singular Hessian.
pub fn covariance_with_retry(
    problem: &CrfProblem,
    fit: &FitResult,
    options: &InferenceOptions,
) -> Result<SandwichCovariance> {
    match godambe_covariance(problem, fit.spec, &fit.theta, options.clusters, 0.0) {
        Err(Error::SingularHessian { .. }) if options.jitter > 0.0 => godambe_covariance(
            problem,
            fit.spec,
            &fit.theta,
            options.clusters,
            options.jitter,
        ),
        other => other,
    }
}

/// Wald tables for a fitted model. `feature_names` covers every design
/// column including the bias; `label_names` every transformation.
pub fn infer(
    problem: &CrfProblem,
    fit: &FitResult,
    feature_names: &[String],
    label_names: &[String],
    options: &InferenceOptions,
) -> Result<InferenceReport> {
    if feature_names.len() != problem.n_features() || label_names.len() != problem.q() {
        return Err(Error::DimensionMismatch("coefficient names".into()));
    }
    let layout = ParamLayout::new(problem.n_features(), problem.q(), fit.spec);
    let cov = covariance_with_retry(problem, fit, options)?;
    let n_segments = problem.segments.len();
    let ess = effective_sample_size(&problem.y, &problem.segment_index(), n_segments)?;
    let reference = if options.t_reference {
        Reference::StudentT {
            df: n_segments.saturating_sub(1) as f64,
        }
    } else {
        Reference::Normal
    };

    let mut intercept_keys = Vec::new();
    let mut unary_keys = Vec::new();
    for j in 0..layout.alpha_rows() {
        for q in 0..layout.q {
            let k = layout.alpha_index(j, q).expect("active row");
            let entry = (j, q, fit.theta[k], cov.g[(k, k)].max(0.0).sqrt());
            if j == 0 {
                intercept_keys.push(entry);
            } else {
                unary_keys.push(entry);
            }
        }
    }
    let mut pair_keys = Vec::new();
    if fit.spec.has_beta() {
        let off = layout.alpha_dim();
        let dim = layout.beta_dim();
        for q in 0..layout.q {
            for r in q..layout.q {
                let m: Vec<f64> = (0..dim).map(|k| layout.basis.element(k)[(q, r)]).collect();
                let mut var = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        var += m[a] * cov.g[(off + a, off + b)] * m[b];
                    }
                }
                pair_keys.push((q, r, fit.params.beta[(q, r)], var.max(0.0).sqrt()));
            }
        }
    }

    let table = |keys: &[(usize, usize, f64, f64)],
                 adjusted: bool,
                 term: &dyn Fn(usize) -> String,
                 ess_of: &dyn Fn(usize, usize) -> usize|
     -> Result<Vec<EffectRow>> {
        let est: Vec<f64> = keys.iter().map(|k| k.2).collect();
        let se: Vec<f64> = keys.iter().map(|k| k.3).collect();
        let rows = wald_intervals(&est, &se, options.level, reference)?;
        Ok(keys
            .iter()
            .zip(rows)
            .map(|(&(a, b, ..), w)| {
                let ess = ess_of(a, b);
                EffectRow {
                    label: label_names[b].clone(),
                    term: term(a),
                    estimate: w.estimate,
                    se: w.se,
                    lo: w.lo,
                    hi: w.hi,
                    p: w.p,
                    q_bh: adjusted.then_some(w.q_bh),
                    ess,
                    ess_flag: EssFlag::of(ess),
                }
            })
            .collect())
    };
    let feature_term = |j: usize| feature_names[j].clone();
    let unary_ess = |_: usize, _: usize| ess.unary_ess;
    let intercepts = table(&intercept_keys, false, &feature_term, &unary_ess)?;
    let unary = table(&unary_keys, true, &feature_term, &unary_ess)?;
    // Pairwise keys are (q, r): report label q against partner r.
    let swapped: Vec<(usize, usize, f64, f64)> =
        pair_keys.iter().map(|&(q, r, e, s)| (r, q, e, s)).collect();
    let label_term = |r: usize| label_names[r].clone();
    let pair_ess = |r: usize, q: usize| ess.pairwise_ess[q][r];
    let pairwise = table(&swapped, true, &label_term, &pair_ess)?;

    Ok(InferenceReport {
        reference,
        level: options.level,
        clusters: options.clusters,
        jitter: cov.jitter,
        intercepts,
        unary,
        pairwise,
        covariance: cov
            .g
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        ess,
    })
}
