use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::BetaBasis;
use crate::error::{Error, Result};
use crate::graph::Adjacency;

/// Overflow-safe logistic function.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Graph-weighted neighbor label sums `S = A Y`.
pub fn neighbor_config(adjacency: &Adjacency, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if y.nrows() != adjacency.n_instances {
        return Err(Error::DimensionMismatch(format!(
            "{} label rows for {} graph nodes",
            y.nrows(),
            adjacency.n_instances
        )));
    }
    let mut s = DMatrix::zeros(y.nrows(), y.ncols());
    for block in &adjacency.blocks {
        for (li, &gi) in block.members.iter().enumerate() {
            for (lj, &gj) in block.members.iter().enumerate() {
                let w = block.weights[(li, lj)];
                if w != 0.0 {
                    for q in 0..y.ncols() {
                        s[(gi, q)] += w * y[(gj, q)];
                    }
                }
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelSpec {
    /// Intercepts only.
    Baseline,
    /// Feature effects, no interactions.
    Unary,
    /// Intercepts and interactions.
    Pairwise,
    Full,
}

impl ModelSpec {
    pub fn full_alpha(self) -> bool {
        matches!(self, ModelSpec::Unary | ModelSpec::Full)
    }

    pub fn has_beta(self) -> bool {
        matches!(self, ModelSpec::Pairwise | ModelSpec::Full)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    /// `(p + 1) x Q`; row 0 holds the intercepts.
    pub alpha: DMatrix<f64>,
    /// `Q x Q`, symmetric with zero row sums.
    pub beta: DMatrix<f64>,
}

/// Maps the free parameter vector to `(alpha, beta)`.
///
/// Free coordinates are the active alpha entries in row-major order
/// (feature-major, label-minor), followed by the beta basis coordinates.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub n_features: usize,
    pub q: usize,
    pub spec: ModelSpec,
    pub basis: BetaBasis,
}

impl ParamLayout {
    /// `n_features` counts the columns of `X` including the bias.
    pub fn new(n_features: usize, q: usize, spec: ModelSpec) -> Self {
        ParamLayout {
            n_features,
            q,
            spec,
            basis: BetaBasis::new(q),
        }
    }

    pub fn alpha_rows(&self) -> usize {
        if self.spec.full_alpha() {
            self.n_features
        } else {
            1
        }
    }

    pub fn alpha_dim(&self) -> usize {
        self.alpha_rows() * self.q
    }

    pub fn beta_dim(&self) -> usize {
        if self.spec.has_beta() {
            self.basis.dim()
        } else {
            0
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha_dim() + self.beta_dim()
    }

    pub fn alpha_index(&self, feature: usize, label: usize) -> Option<usize> {
        (feature < self.alpha_rows()).then(|| feature * self.q + label)
    }

    pub fn unpack(&self, theta: &[f64]) -> CrfParams {
        assert_eq!(theta.len(), self.dim(), "parameter vector length");
        let mut alpha = DMatrix::zeros(self.n_features, self.q);
        for j in 0..self.alpha_rows() {
            for q in 0..self.q {
                alpha[(j, q)] = theta[j * self.q + q];
            }
        }
        let beta = if self.spec.has_beta() {
            self.basis.reconstruct(&theta[self.alpha_dim()..])
        } else {
            DMatrix::zeros(self.q, self.q)
        };
        CrfParams { alpha, beta }
    }

    /// Inverse of `unpack` on the entries this spec can represent.
    pub fn pack(&self, params: &CrfParams) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.dim());
        for j in 0..self.alpha_rows() {
            for q in 0..self.q {
                theta.push(params.alpha[(j, q)]);
            }
        }
        if self.spec.has_beta() {
            theta.extend(self.basis.project(&params.beta));
        }
        theta
    }
}

/// Fitting data: design matrix, labels and neighbor sums, with the row
/// membership of each segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfProblem {
    /// `N x (p + 1)`, bias in column 0.
    pub x: DMatrix<f64>,
    /// `N x Q` in {0, 1}.
    pub y: DMatrix<f64>,
    /// `N x Q`, held fixed during fitting.
    pub s: DMatrix<f64>,
    pub segments: Vec<Vec<usize>>,
}

impl CrfProblem {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, adjacency: &Adjacency) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} design rows, {} label rows",
                x.nrows(),
                y.nrows()
            )));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::DimensionMismatch("labels must be 0 or 1".into()));
        }
        let s = neighbor_config(adjacency, &y)?;
        let segments = adjacency.blocks.iter().map(|b| b.members.clone()).collect();
        Ok(CrfProblem { x, y, s, segments })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Segment index of every row.
    pub fn segment_index(&self) -> Vec<usize> {
        let mut out = vec![0; self.n()];
        for (s, rows) in self.segments.iter().enumerate() {
            for &r in rows {
                out[r] = s;
            }
        }
        out
    }

    fn check(&self, layout: &ParamLayout) -> Result<()> {
        if layout.n_features != self.n_features() || layout.q != self.q() {
            return Err(Error::DimensionMismatch(format!(
                "layout is {}x{}, data is {}x{}",
                layout.n_features,
                layout.q,
                self.n_features(),
                self.q()
            )));
        }
        if self.s.shape() != self.y.shape() {
            return Err(Error::DimensionMismatch(
                "neighbor sums do not match labels".into(),
            ));
        }
        Ok(())
    }

    /// Linear predictors `Z = X alpha + S beta`.
    pub fn linear_predictor(&self, params: &CrfParams) -> DMatrix<f64> {
        &self.x * &params.alpha + &self.s * &params.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
}

impl Penalty {
    pub const NONE: Penalty = Penalty {
        lambda_alpha: 0.0,
        lambda_beta: 0.0,
    };
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty {
            lambda_alpha: 1e-3,
            lambda_beta: 1e-3,
        }
    }
}

/// Unpenalized pseudo-log-likelihood `sum y z - ln(1 + e^z)`.
pub fn log_pseudo_likelihood(problem: &CrfProblem, params: &CrfParams) -> f64 {
    let z = problem.linear_predictor(params);
    z.iter()
        .zip(problem.y.iter())
        .map(|(&z, &y)| y * z - softplus(z))
        .sum()
}

/// Penalized pseudo-log-likelihood and its gradient in free coordinates.
pub fn pl_objective_and_gradient(
    problem: &CrfProblem,
    layout: &ParamLayout,
    theta: &[f64],
    penalty: Penalty,
) -> Result<(f64, Vec<f64>)> {
    problem.check(layout)?;
    let params = layout.unpack(theta);
    let z = problem.linear_predictor(&params);
    let mut value = 0.0;
    let mut resid = DMatrix::zeros(z.nrows(), z.ncols());
    for ((r, &z), &y) in resid.iter_mut().zip(z.iter()).zip(problem.y.iter()) {
        value += y * z - softplus(z);
        *r = y - logistic(z);
    }
    if !value.is_finite() {
        return Err(Error::NonFiniteValue("pseudo-likelihood"));
    }

    let alpha_dim = layout.alpha_dim();
    let mut grad = vec![0.0; layout.dim()];
    let g_alpha = problem.x.tr_mul(&resid);
    for j in 0..layout.alpha_rows() {
        for q in 0..layout.q {
            grad[j * layout.q + q] = g_alpha[(j, q)];
        }
    }
    if layout.spec.has_beta() {
        let g_beta = resid.tr_mul(&problem.s);
        grad[alpha_dim..].copy_from_slice(&layout.basis.project(&g_beta));
    }

    let alpha_sq: f64 = theta[..alpha_dim].iter().map(|a| a * a).sum();
    let beta_sq: f64 = theta[alpha_dim..].iter().map(|b| b * b).sum();
    value -= penalty.lambda_alpha * alpha_sq + penalty.lambda_beta * beta_sq;
    for (k, g) in grad.iter_mut().enumerate() {
        let lambda = if k < alpha_dim {
            penalty.lambda_alpha
        } else {
            penalty.lambda_beta
        };
        *g -= 2.0 * lambda * theta[k];
    }
    Ok((value, grad))
}

/// Derivative of `z_iq` with respect to every free coordinate.
fn predictor_jacobian(
    problem: &CrfProblem,
    layout: &ParamLayout,
    beta_rows: &[DMatrix<f64>],
    i: usize,
    q: usize,
    phi: &mut DVector<f64>,
) {
    phi.fill(0.0);
    for j in 0..layout.alpha_rows() {
        phi[j * layout.q + q] = problem.x[(i, j)];
    }
    let off = layout.alpha_dim();
    for (k, e) in beta_rows.iter().enumerate() {
        // z_iq depends on coordinate k through sum_r S_ir E_k[q][r].
        let mut d = 0.0;
        for r in 0..layout.q {
            d += problem.s[(i, r)] * e[(q, r)];
        }
        phi[off + k] = d;
    }
}

fn active_basis(layout: &ParamLayout) -> Vec<DMatrix<f64>> {
    (0..layout.beta_dim())
        .map(|k| layout.basis.element(k).clone())
        .collect()
}

/// Analytic Hessian of the penalized objective in free coordinates.
pub fn pl_hessian(
    problem: &CrfProblem,
    layout: &ParamLayout,
    theta: &[f64],
    penalty: Penalty,
) -> Result<DMatrix<f64>> {
    problem.check(layout)?;
    let params = layout.unpack(theta);
    let z = problem.linear_predictor(&params);
    let basis = active_basis(layout);
    let d = layout.dim();
    let mut h = DMatrix::zeros(d, d);
    let mut phi = DVector::zeros(d);
    for i in 0..problem.n() {
        for q in 0..layout.q {
            let p = logistic(z[(i, q)]);
            let w = p * (1.0 - p);
            if w == 0.0 {
                continue;
            }
            predictor_jacobian(problem, layout, &basis, i, q, &mut phi);
            h.ger(-w, &phi, &phi, 1.0);
        }
    }
    for k in 0..d {
        let lambda = if k < layout.alpha_dim() {
            penalty.lambda_alpha
        } else {
            penalty.lambda_beta
        };
        h[(k, k)] -= 2.0 * lambda;
    }
    Ok(h)
}

/// Unpenalized score contributions summed within groups: row `g` of the
/// result is the gradient contribution of every instance with
/// `group[i] == g`.
pub fn grouped_scores(
    problem: &CrfProblem,
    layout: &ParamLayout,
    theta: &[f64],
    group: &[usize],
    n_groups: usize,
) -> Result<DMatrix<f64>> {
    problem.check(layout)?;
    if group.len() != problem.n() {
        return Err(Error::DimensionMismatch("group index length".into()));
    }
    let params = layout.unpack(theta);
    let z = problem.linear_predictor(&params);
    let basis = active_basis(layout);
    let d = layout.dim();
    let mut out = DMatrix::zeros(n_groups, d);
    let mut phi = DVector::zeros(d);
    for i in 0..problem.n() {
        for q in 0..layout.q {
            let e = problem.y[(i, q)] - logistic(z[(i, q)]);
            predictor_jacobian(problem, layout, &basis, i, q, &mut phi);
            let mut row = out.row_mut(group[i]);
            for k in 0..d {
                row[k] += e * phi[k];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_adjacency, GraphConfig, SegmentGraph};

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(3f64.ln()) - 0.75).abs() < 1e-15);
        let tiny = logistic(-745.0);
        assert!(tiny >= 0.0 && tiny < 1e-300);
        assert!(softplus(-745.0).is_finite());
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn neighbor_sums() {
        let block = SegmentGraph::from_upper_edges(vec![0, 1], &[(0, 1, 0.5)]).unwrap();
        let adj = Adjacency::new(2, vec![block]).unwrap();
        let y = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let s = neighbor_config(&adj, &y).unwrap();
        assert_eq!(
            s.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.5, 0.0, 0.0]
        );
        let zero = neighbor_config(&adj, &DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(zero, DMatrix::zeros(2, 3));
        assert!(neighbor_config(&adj, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn singleton_rows_have_no_neighbors() {
        let adj = build_adjacency(4, &[vec![0, 1, 2], vec![3]], &GraphConfig::default()).unwrap();
        let s = neighbor_config(&adj, &DMatrix::from_element(4, 2, 1.0)).unwrap();
        assert_eq!(s.row(3).sum(), 0.0);
    }

    #[test]
    fn all_zero_parameters() {
        let adj = build_adjacency(4, &[vec![0, 1], vec![2, 3]], &GraphConfig::default()).unwrap();
        let x = DMatrix::from_fn(4, 3, |i, j| if j == 0 { 1.0 } else { (i + j) as f64 * 0.3 });
        let y = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let problem = CrfProblem::new(x, y, &adj).unwrap();
        let layout = ParamLayout::new(3, 2, ModelSpec::Full);
        let (v, _) =
            pl_objective_and_gradient(&problem, &layout, &vec![0.0; layout.dim()], Penalty::NONE)
                .unwrap();
        assert!((v + 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn layout_dimensions_and_round_trip() {
        let full = ParamLayout::new(4, 3, ModelSpec::Full);
        assert_eq!(full.dim(), 12 + 3);
        assert_eq!(ParamLayout::new(4, 3, ModelSpec::Baseline).dim(), 3);
        assert_eq!(ParamLayout::new(4, 3, ModelSpec::Unary).dim(), 12);
        assert_eq!(ParamLayout::new(4, 3, ModelSpec::Pairwise).dim(), 6);
        let theta: Vec<f64> = (0..full.dim()).map(|k| k as f64 * 0.1 - 0.4).collect();
        let back = full.pack(&full.unpack(&theta));
        for (a, b) in theta.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        let params = full.unpack(&theta);
        assert_eq!(params.beta, params.beta.transpose());
        for r in 0..3 {
            assert!(params.beta.row(r).sum().abs() < 1e-12);
        }
    }
}
