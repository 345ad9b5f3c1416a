use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crf::{fit_problem, CrfProblem, FitConfig, FitResult, ModelSpec};
use crate::error::Result;

/// Identifies how permutation streams are derived, recorded with results.
pub const PERMUTATION_RNG_SCHEME: &str =
    "chacha8/seed=run-seed/stream=attempt<<40|comparison<<32|replicate";

/// CLR values below this are treated as optimization failures.
pub const NEGATIVE_CLR_TOLERANCE: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    BaselineVsUnary,
    UnaryVsFull,
    PairwiseVsFull,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [
        Comparison::BaselineVsUnary,
        Comparison::UnaryVsFull,
        Comparison::PairwiseVsFull,
    ];

    pub fn null(self) -> ModelSpec {
        match self {
            Comparison::BaselineVsUnary => ModelSpec::Baseline,
            Comparison::UnaryVsFull => ModelSpec::Unary,
            Comparison::PairwiseVsFull => ModelSpec::Pairwise,
        }
    }

    pub fn alternative(self) -> ModelSpec {
        match self {
            Comparison::BaselineVsUnary => ModelSpec::Unary,
            _ => ModelSpec::Full,
        }
    }

    /// Whether replicates permute neighbor sums rather than covariates.
    pub fn permutes_neighbors(self) -> bool {
        self == Comparison::UnaryVsFull
    }

    fn stream_id(self) -> u64 {
        match self {
            Comparison::BaselineVsUnary => 0,
            Comparison::UnaryVsFull => 1,
            Comparison::PairwiseVsFull => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Comparison::BaselineVsUnary => "Baseline vs Unary",
            Comparison::UnaryVsFull => "Unary vs Full",
            Comparison::PairwiseVsFull => "Pairwise vs Full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClrConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Start permuted refits from the observed alternative fit.
    pub warm_start: bool,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClrTestResult {
    pub comparison: Comparison,
    pub observed_clr: f64,
    pub null_log_pl: f64,
    pub alternative_log_pl: f64,
    /// One value per replicate; replicates whose refit failed twice hold
    /// the observed CLR so that they count as exceedances.
    pub permuted_clrs: Vec<f64>,
    pub exceedances: usize,
    pub p_perm: f64,
    pub failed_replicates: Vec<usize>,
    pub retried_replicates: Vec<usize>,
    /// Replicates with a CLR below the negative tolerance.
    pub negative_replicates: Vec<usize>,
    /// Observed fits failed to converge or produced a negative CLR.
    pub observed_flagged: bool,
    pub rng_scheme: String,
}

/// `(1 + exceedances) / (B + 1)`.
pub fn permutation_p_value(exceedances: usize, replicates: usize) -> f64 {
    (1 + exceedances) as f64 / (replicates + 1) as f64
}

/// Shuffles the rows of the permuted block within each segment.
pub fn permute_within_segments(
    problem: &CrfProblem,
    neighbors: bool,
    rng: &mut ChaCha8Rng,
) -> CrfProblem {
    let mut out = problem.clone();
    for rows in &problem.segments {
        let mut order = rows.clone();
        order.shuffle(rng);
        for (&dst, &src) in rows.iter().zip(&order) {
            if neighbors {
                out.s.set_row(dst, &problem.s.row(src));
            } else {
                for j in 1..problem.x.ncols() {
                    out.x[(dst, j)] = problem.x[(src, j)];
                }
            }
        }
    }
    out
}

fn replicate_rng(seed: u64, comparison: Comparison, replicate: usize, attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((attempt << 40) | (comparison.stream_id() << 32) | replicate as u64);
    rng
}

enum Replicate {
    Done { clr: f64, retried: bool },
    Failed,
}

/// Segment-constrained permutation test of a nested model comparison.
///
/// The null model never involves the permuted block (covariates for
/// Baseline and Pairwise, neighbor sums for Unary), so its refit on
/// permuted data equals the observed null fit and is reused.
pub fn clr_permutation_test(
    problem: &CrfProblem,
    comparison: Comparison,
    config: &ClrConfig,
) -> Result<ClrTestResult> {
    let null = fit_problem(problem, comparison.null(), &config.fit, None)?;
    let alt = fit_problem(problem, comparison.alternative(), &config.fit, None)?;
    let observed_clr = alt.log_pl - null.log_pl;
    let observed_flagged =
        !null.converged || !alt.converged || observed_clr < NEGATIVE_CLR_TOLERANCE;

    let refit = |p: &CrfProblem| -> Option<FitResult> {
        let init = config.warm_start.then_some(alt.theta.as_slice());
        fit_problem(p, comparison.alternative(), &config.fit, init)
            .ok()
            .filter(|f| f.converged)
    };
    let outcomes: Vec<Replicate> = (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            for attempt in 0..2u64 {
                let mut rng = replicate_rng(config.seed, comparison, b, attempt);
                let permuted =
                    permute_within_segments(problem, comparison.permutes_neighbors(), &mut rng);
                if let Some(fit) = refit(&permuted) {
                    return Replicate::Done {
                        clr: fit.log_pl - null.log_pl,
                        retried: attempt > 0,
                    };
                }
            }
            Replicate::Failed
        })
        .collect();

    let mut result = ClrTestResult {
        comparison,
        observed_clr,
        null_log_pl: null.log_pl,
        alternative_log_pl: alt.log_pl,
        permuted_clrs: Vec::with_capacity(config.replicates),
        exceedances: 0,
        p_perm: 0.0,
        failed_replicates: Vec::new(),
        retried_replicates: Vec::new(),
        negative_replicates: Vec::new(),
        observed_flagged,
        rng_scheme: PERMUTATION_RNG_SCHEME.to_string(),
    };
    for (b, outcome) in outcomes.into_iter().enumerate() {
        let clr = match outcome {
            Replicate::Done { clr, retried } => {
                if retried {
                    result.retried_replicates.push(b);
                }
                if clr < NEGATIVE_CLR_TOLERANCE {
                    result.negative_replicates.push(b);
                }
                clr
            }
            Replicate::Failed => {
                result.failed_replicates.push(b);
                observed_clr
            }
        };
        if clr >= observed_clr {
            result.exceedances += 1;
        }
        result.permuted_clrs.push(clr);
    }
    result.p_perm = permutation_p_value(result.exceedances, config.replicates);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_formula() {
        assert!((permutation_p_value(0, 999) - 0.001).abs() < 1e-15);
        assert_eq!(format!("{:.4}", permutation_p_value(0, 1000)), "0.0010");
        assert_eq!(permutation_p_value(1000, 1000), 1.0);
    }

    #[test]
    fn nested_models() {
        for c in Comparison::ALL {
            assert_ne!(c.null(), c.alternative());
        }
        assert!(Comparison::UnaryVsFull.permutes_neighbors());
        assert!(!Comparison::PairwiseVsFull.permutes_neighbors());
    }
}
