mod common;

use motif_crf::crf::{fit_problem, CrfProblem, FitConfig, ModelSpec, ParamLayout};
use motif_crf::graph::{build_adjacency, GraphConfig};
use motif_crf::inference::{
    bh_adjust, clr_permutation_test, godambe_covariance, permutation_p_value,
    permute_within_segments, ClrConfig, Comparison, ScoreClusters, NEGATIVE_CLR_TOLERANCE,
};
use motif_crf::simulate::{synthesize_corpus, SimConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rayon::prelude::*;

fn random_problem(seed: u64, sizes: &[usize], q: usize, p: usize) -> CrfProblem {
    let mut rng = common::rng(seed);
    let n: usize = sizes.iter().sum();
    let x = common::normal_design(&mut rng, n, p);
    let y = common::bernoulli_labels(&mut rng, n, q, 0.4);
    let adjacency = build_adjacency(n, &common::blocks(sizes), &GraphConfig::default()).unwrap();
    CrfProblem::new(x, y, &adjacency).unwrap()
}

fn sorted_rows(m: &DMatrix<f64>, rows: &[usize], cols: std::ops::Range<usize>) -> Vec<Vec<u64>> {
    let mut out: Vec<Vec<u64>> = rows
        .iter()
        .map(|&i| cols.clone().map(|j| m[(i, j)].to_bits()).collect())
        .collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_p_value_is_bounded(b in 1usize..5000, frac in 0.0f64..=1.0) {
        let exceedances = (frac * b as f64).floor() as usize;
        let p = permutation_p_value(exceedances, b);
        prop_assert!(p >= 1.0 / (b + 1) as f64 && p <= 1.0);
        prop_assert_eq!(permutation_p_value(0, b), 1.0 / (b + 1) as f64);
        prop_assert_eq!(permutation_p_value(b, b), 1.0);
    }

    #[test]
    fn permutations_stay_inside_segments(
        seed in any::<u64>(),
        sizes in prop::collection::vec(1usize..7, 1..6),
        neighbors in any::<bool>(),
    ) {
        let problem = random_problem(seed, &sizes, 2, 3);
        let permuted = permute_within_segments(&problem, neighbors, &mut common::rng(seed ^ 1));
        prop_assert_eq!(&permuted.y, &problem.y);
        prop_assert_eq!(permuted.x.column(0), problem.x.column(0));
        let (p, q) = (problem.x.ncols(), problem.q());
        for rows in &problem.segments {
            if neighbors {
                prop_assert_eq!(&permuted.x, &problem.x);
                prop_assert_eq!(sorted_rows(&permuted.s, rows, 0..q), sorted_rows(&problem.s, rows, 0..q));
            } else {
                prop_assert_eq!(&permuted.s, &problem.s);
                prop_assert_eq!(sorted_rows(&permuted.x, rows, 1..p), sorted_rows(&problem.x, rows, 1..p));
            }
        }
    }

    #[test]
    fn bh_matches_definition_and_is_monotone(p in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        let q = bh_adjust(&p);
        let oracle = common::brute_force_bh(&p);
        for k in 0..p.len() {
            prop_assert!((q[k] - oracle[k]).abs() < 1e-12);
            prop_assert!(q[k] >= p[k] - 1e-15 && q[k] <= 1.0);
            for l in 0..p.len() {
                if p[k] <= p[l] {
                    prop_assert!(q[k] <= q[l] + 1e-15);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sandwich_is_symmetric_with_nonnegative_variances(seed in any::<u64>()) {
        let problem = random_problem(seed, &[5; 30], 3, 2);
        let fit = fit_problem(&problem, ModelSpec::Full, &FitConfig::default(), None).unwrap();
        let cov = godambe_covariance(&problem, ModelSpec::Full, &fit.theta, ScoreClusters::Segment, 1e-8).unwrap();
        let g = &cov.g;
        for a in 0..g.nrows() {
            prop_assert!(g[(a, a)] >= 0.0);
            for b in 0..g.ncols() {
                prop_assert_eq!(g[(a, b)], g[(b, a)]);
            }
        }
    }

    #[test]
    fn observed_clr_is_nonnegative_unless_flagged(seed in any::<u64>(), which in 0usize..3) {
        let problem = random_problem(seed, &[4; 20], 2, 2);
        let config = ClrConfig { replicates: 4, seed, warm_start: false, fit: FitConfig::default() };
        let r = clr_permutation_test(&problem, Comparison::ALL[which], &config).unwrap();
        prop_assert!(r.observed_clr >= NEGATIVE_CLR_TOLERANCE || r.observed_flagged);
        prop_assert_eq!(r.permuted_clrs.len(), 4);
        prop_assert!(r.p_perm >= 0.2 && r.p_perm <= 1.0);
    }
}

/// Sandwich standard errors against the spread of estimates over fresh
/// simulated corpora with 400 segments, pooled over coefficients.
#[test]
fn sandwich_matches_monte_carlo_spread() {
    let mut truth = SimConfig::new(400, 6, 2, 2, 0);
    truth.true_alpha = DMatrix::from_row_slice(3, 2, &[-0.4, 0.2, 0.6, -0.3, 0.0, 0.5]);
    truth.true_beta = DMatrix::from_row_slice(2, 2, &[-0.6, 0.6, 0.6, -0.6]);
    let dim = ParamLayout::new(3, 2, ModelSpec::Full).dim();
    let reps: Vec<(Vec<f64>, Vec<f64>)> = (0..200u64)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig {
                seed: 40_000 + r,
                ..truth.clone()
            };
            let data = synthesize_corpus(&cfg).unwrap();
            let problem = CrfProblem::new(data.x, data.y, &data.adjacency).unwrap();
            let fit = fit_problem(&problem, ModelSpec::Full, &FitConfig::default(), None).unwrap();
            assert!(fit.converged);
            let cov = godambe_covariance(
                &problem,
                ModelSpec::Full,
                &fit.theta,
                ScoreClusters::Segment,
                0.0,
            )
            .unwrap();
            (fit.theta, cov.standard_errors())
        })
        .collect();
    let n = reps.len() as f64;
    let mut ratios = Vec::with_capacity(dim);
    for k in 0..dim {
        let mean = reps.iter().map(|r| r.0[k]).sum::<f64>() / n;
        let sd = (reps.iter().map(|r| (r.0[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let se = reps.iter().map(|r| r.1[k]).sum::<f64>() / n;
        ratios.push(se / sd);
    }
    let pooled = ratios.iter().sum::<f64>() / dim as f64;
    assert!(
        (pooled - 1.0).abs() < 0.15,
        "pooled SE/SD ratio {pooled:.3}, per coefficient {ratios:.3?}"
    );
}
