//! Multilabel conditional random field over the instance graph, fitted by
//! maximizing an L2-penalized pseudo-likelihood.
//!
//! The linear predictor of label `q` on instance `i` is
//! `z_iq = X_i alpha_q + sum_r S_ir beta_qr` with `S = A Y`. The interaction
//! matrix `beta` is kept symmetric with zero row sums by parameterizing it in
//! an orthonormal basis of that subspace.

mod basis;
mod fit;
pub mod lbfgs;
mod objective;

pub use basis::BetaBasis;
pub use fit::{fit_crf, fit_problem, FitConfig, FitResult};
pub use lbfgs::{LbfgsConfig, Termination};
pub use objective::{
    grouped_scores, log_pseudo_likelihood, logistic, neighbor_config, pl_hessian,
    pl_objective_and_gradient, softplus, CrfParams, CrfProblem, ModelSpec, ParamLayout, Penalty,
};
