//! Human-readable result tables.

use nalgebra::DMatrix;

use crate::align_label::Transformation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceRow {
    pub label: String,
    pub count: usize,
    pub n: usize,
    pub frequency: f64,
}

/// Share of instances carrying each label.
pub fn prevalence_report(y: &DMatrix<f64>, label_names: &[String]) -> Result<Vec<PrevalenceRow>> {
    let n = y.nrows();
    if n == 0 {
        return Err(Error::EmptyData("no labelled instances".into()));
    }
    if label_names.len() != y.ncols() {
        return Err(Error::DimensionMismatch("label names".into()));
    }
    Ok(label_names
        .iter()
        .enumerate()
        .map(|(q, name)| {
            let count = y.column(q).iter().filter(|&&v| v == 1.0).count();
            PrevalenceRow {
                label: name.clone(),
                count,
                n,
                frequency: count as f64 / n as f64,
            }
        })
        .collect())
}

pub fn format_frequency(f: f64) -> String {
    format!("{f:.3}")
}

pub fn format_p(p: f64) -> String {
    format!("{p:.4}")
}

pub fn format_estimate(x: f64) -> String {
    format!("{x:.3}")
}

/// Display name of a label column, falling back to the column itself.
pub fn label_display(column: &str) -> String {
    Transformation::ALL
        .iter()
        .find(|t| t.column() == column)
        .map(|t| t.display_name().to_string())
        .unwrap_or_else(|| column.to_string())
}

/// Left-aligned text table with a title line.
pub fn render_table(title: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = format!("{title}\n");
    out.push_str(&line(header));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(&rule));
    if rows.is_empty() {
        out.push_str("(no rows)\n");
    }
    for row in rows {
        out.push_str(&line(row));
    }
    out
}
