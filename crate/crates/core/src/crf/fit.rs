use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lbfgs::{inf_norm, minimize, LbfgsConfig, Termination};
use super::objective::{
    log_pseudo_likelihood, pl_objective_and_gradient, CrfParams, CrfProblem, ModelSpec,
    ParamLayout, Penalty,
};
use crate::error::{Error, Result};
use crate::graph::Adjacency;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub penalty: Penalty,
    pub lbfgs: LbfgsConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params: CrfParams,
    /// Free coordinates of the optimum.
    pub theta: Vec<f64>,
    /// Penalized pseudo-log-likelihood at the optimum.
    pub objective: f64,
    /// Unpenalized pseudo-log-likelihood at the optimum.
    pub log_pl: f64,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    /// Infinity norm of the penalized gradient.
    pub grad_norm: f64,
    /// Penalized pseudo-log-likelihood per iteration.
    pub trace: Vec<f64>,
}

/// Maximizes the penalized pseudo-likelihood from `init` (zeros if absent).
pub fn fit_problem(
    problem: &CrfProblem,
    spec: ModelSpec,
    config: &FitConfig,
    init: Option<&[f64]>,
) -> Result<FitResult> {
    if problem.n() == 0 {
        return Err(Error::EmptyData("no motif instances to fit".into()));
    }
    let layout = ParamLayout::new(problem.n_features(), problem.q(), spec);
    let x0 = match init {
        Some(t) if t.len() == layout.dim() => t.to_vec(),
        Some(t) => {
            return Err(Error::DimensionMismatch(format!(
                "initial vector has {} entries, model has {}",
                t.len(),
                layout.dim()
            )))
        }
        None => vec![0.0; layout.dim()],
    };
    let out = minimize(
        |theta| match pl_objective_and_gradient(problem, &layout, theta, config.penalty) {
            Ok((v, g)) => (-v, g.into_iter().map(|g| -g).collect()),
            Err(_) => (f64::INFINITY, vec![f64::NAN; theta.len()]),
        },
        x0,
        &config.lbfgs,
    );
    if out.termination == Termination::NonFiniteStart {
        return Err(Error::NonFiniteValue(
            "pseudo-likelihood at the initial point",
        ));
    }
    let params = layout.unpack(&out.x);
    let grad_norm = inf_norm(&out.grad);
    Ok(FitResult {
        spec,
        log_pl: log_pseudo_likelihood(problem, &params),
        params,
        objective: -out.f,
        converged: grad_norm < config.lbfgs.gtol,
        termination: out.termination,
        iterations: out.iterations,
        grad_norm,
        trace: out.trace.iter().map(|f| -f).collect(),
        theta: out.x,
    })
}

pub fn fit_crf(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    adjacency: &Adjacency,
    spec: ModelSpec,
    config: &FitConfig,
) -> Result<FitResult> {
    let problem = CrfProblem::new(x.clone(), y.clone(), adjacency)?;
    fit_problem(&problem, spec, config, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::build_design_matrix;
    use crate::graph::{build_adjacency, GraphConfig};

    fn toy(n: usize, y: impl Fn(usize, usize) -> f64) -> (DMatrix<f64>, DMatrix<f64>, Adjacency) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i * 7 % 11) as f64, (i * 5 % 13) as f64])
            .collect();
        let x = build_design_matrix(&rows, &["a".into(), "b".into()])
            .unwrap()
            .x;
        let yy = DMatrix::from_fn(n, 2, y);
        let segs: Vec<Vec<usize>> = (0..n)
            .collect::<Vec<_>>()
            .chunks(4)
            .map(|c| c.to_vec())
            .collect();
        let adj = build_adjacency(n, &segs, &GraphConfig::default()).unwrap();
        (x, yy, adj)
    }

    #[test]
    fn empty_data_is_rejected() {
        let adj = Adjacency::new(0, vec![]).unwrap();
        let err = fit_crf(
            &DMatrix::zeros(0, 2),
            &DMatrix::zeros(0, 2),
            &adj,
            ModelSpec::Full,
            &FitConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyData(_)));
    }

    #[test]
    fn all_zero_labels() {
        let (x, y, adj) = toy(40, |_, _| 0.0);
        let fit = fit_crf(&x, &y, &adj, ModelSpec::Full, &FitConfig::default()).unwrap();
        assert!(fit.converged);
        for j in 1..3 {
            for q in 0..2 {
                assert!(fit.params.alpha[(j, q)].abs() < 1e-2);
            }
        }
        // Ridge-logistic on constant data: n sigma(a) = -2 lambda a per label.
        let a = fit.params.alpha[(0, 0)];
        assert!(a < -3.0);
        let stationarity = 40.0 * crate::crf::logistic(a) + 2.0 * 1e-3 * a;
        assert!(stationarity.abs() < 1e-5);
    }

    #[test]
    fn fit_is_deterministic_and_feasible() {
        let (x, y, adj) = toy(48, |i, q| ((i * (q + 3)) % 5 < 2) as u8 as f64);
        let a = fit_crf(&x, &y, &adj, ModelSpec::Full, &FitConfig::default()).unwrap();
        let b = fit_crf(&x, &y, &adj, ModelSpec::Full, &FitConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.converged);
        let beta = &a.params.beta;
        assert_eq!(beta, &beta.transpose());
        for r in 0..2 {
            assert!(beta.row(r).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let (x, y, adj) = toy(48, |i, q| ((i * (q + 3)) % 5 < 2) as u8 as f64);
        let config = FitConfig {
            lbfgs: LbfgsConfig {
                max_iterations: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let fit = fit_crf(&x, &y, &adj, ModelSpec::Full, &config).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.termination, Termination::MaxIterations);
    }
}
