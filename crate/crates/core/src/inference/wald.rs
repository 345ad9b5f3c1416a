use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Reference distribution for Wald statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Reference {
    Normal,
    StudentT { df: f64 },
}

impl Reference {
    fn quantile_and_sf(self) -> Result<(Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>)> {
        match self {
            Reference::Normal => {
                let d = Normal::standard();
                Ok((
                    Box::new(move |p| d.inverse_cdf(p)),
                    Box::new(move |x| d.sf(x)),
                ))
            }
            Reference::StudentT { df } => {
                let d = StudentsT::new(0.0, 1.0, df)
                    .map_err(|e| Error::Config(format!("t reference with df {df}: {e}")))?;
                Ok((
                    Box::new(move |p| d.inverse_cdf(p)),
                    Box::new(move |x| d.sf(x)),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldRow {
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub p: f64,
    /// Benjamini-Hochberg adjusted p-value within the row's family.
    pub q_bh: f64,
}

/// Wald intervals and two-sided p-values, with BH adjustment across the
/// whole input (one family).
pub fn wald_intervals(
    estimates: &[f64],
    ses: &[f64],
    level: f64,
    reference: Reference,
) -> Result<Vec<WaldRow>> {
    if estimates.len() != ses.len() {
        return Err(Error::DimensionMismatch(
            "estimates and standard errors".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let (quantile, sf) = reference.quantile_and_sf()?;
    let crit = quantile(0.5 + level / 2.0);
    let mut rows: Vec<WaldRow> = estimates
        .iter()
        .zip(ses)
        .map(|(&estimate, &se)| {
            let p = if se > 0.0 {
                (2.0 * sf((estimate / se).abs())).min(1.0)
            } else if estimate != 0.0 {
                0.0
            } else {
                1.0
            };
            WaldRow {
                estimate,
                se,
                lo: estimate - crit * se,
                hi: estimate + crit * se,
                p,
                q_bh: p,
            }
        })
        .collect();
    let q = bh_adjust(&rows.iter().map(|r| r.p).collect::<Vec<_>>());
    for (row, q) in rows.iter_mut().zip(q) {
        row.q_bh = q;
    }
    Ok(rows)
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let candidate = m as f64 * p_values[idx] / (rank + 1) as f64;
        running = running.min(candidate);
        q[idx] = running.min(1.0);
    }
    q
}
