use nalgebra::DMatrix;

/// Orthonormal basis (Frobenius inner product) of the symmetric `Q x Q`
/// matrices whose rows sum to zero. Dimension `Q(Q-1)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaBasis {
    q: usize,
    elements: Vec<DMatrix<f64>>,
}

fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

impl BetaBasis {
    /// Gram-Schmidt over the edge Laplacians
    /// `e_q e_r' + e_r e_q' - e_q e_q' - e_r e_r'`, `q < r`.
    pub fn new(q: usize) -> Self {
        let mut elements: Vec<DMatrix<f64>> = Vec::with_capacity(q * q.saturating_sub(1) / 2);
        for a in 0..q {
            for b in a + 1..q {
                let mut m = DMatrix::zeros(q, q);
                m[(a, b)] = 1.0;
                m[(b, a)] = 1.0;
                m[(a, a)] = -1.0;
                m[(b, b)] = -1.0;
                for e in &elements {
                    let c = frobenius(&m, e);
                    m -= e * c;
                }
                let norm = frobenius(&m, &m).sqrt();
                elements.push(m / norm);
            }
        }
        BetaBasis { q, elements }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn element(&self, k: usize) -> &DMatrix<f64> {
        &self.elements[k]
    }

    pub fn reconstruct(&self, coords: &[f64]) -> DMatrix<f64> {
        assert_eq!(coords.len(), self.dim(), "basis coordinate count");
        let mut beta = DMatrix::zeros(self.q, self.q);
        for (e, &c) in self.elements.iter().zip(coords) {
            beta += e * c;
        }
        // Exact symmetry regardless of rounding order.
        (&beta + beta.transpose()) * 0.5
    }

    /// Frobenius projections onto each element. For a member of the
    /// subspace these are its coordinates; for a general matrix they give
    /// the chain rule from matrix entries to coordinates.
    pub fn project(&self, m: &DMatrix<f64>) -> Vec<f64> {
        self.elements.iter().map(|e| frobenius(m, e)).collect()
    }
}
