//! Motif-level descriptors and the standardized design matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_model::{
    key_tonic_pitch_class, Corpus, Diagnostic, Movement, NoteEvent, ONSET_TOLERANCE,
};

pub const BASE_FEATURES: [&str; 10] = [
    "spread_harmonic_complexity",
    "secondary_chord_proportion",
    "key_change_count",
    "pitch_spread",
    "motif_pitch_register",
    "ioi_sd",
    "silence_proportion",
    "metrical_stress_rate",
    "expressive_density",
    "dynamic_variability",
];
pub const ACCENTUATION_FEATURE: &str = "accentuation_sd";

/// Human-readable label for a feature column name.
pub fn display_name(column: &str) -> String {
    match column {
        "intercept" => "Intercept".to_string(),
        "ioi_sd" => "IOI Standard Deviation".to_string(),
        "accentuation_sd" => "Accentuation SD".to_string(),
        other => other
            .split('_')
            .map(|w| {
                let mut c = w.chars();
                c.next()
                    .map(|f| f.to_uppercase().chain(c).collect::<String>())
                    .unwrap_or_default()
            })
            .collect::<Vec<_>>()
            .join(" "),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Weights for a downbeat, another integer beat, and an off-beat.
    pub metrical_weights: [f64; 3],
    /// Adds the SD of per-note expressive marks as an eleventh column.
    pub accentuation_sd: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            metrical_weights: [3.0, 2.0, 1.0],
            accentuation_sd: false,
        }
    }
}

impl FeatureConfig {
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
        if self.accentuation_sd {
            names.push(ACCENTUATION_FEATURE.to_string());
        }
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub spread_harmonic_complexity: f64,
    pub secondary_chord_proportion: f64,
    pub key_change_count: f64,
    pub pitch_spread: f64,
    pub motif_pitch_register: f64,
    pub ioi_sd: f64,
    pub silence_proportion: f64,
    pub metrical_stress_rate: f64,
    pub expressive_density: f64,
    pub dynamic_variability: f64,
    pub accentuation_sd: Option<f64>,
}

impl FeatureVector {
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.spread_harmonic_complexity,
            self.secondary_chord_proportion,
            self.key_change_count,
            self.pitch_spread,
            self.motif_pitch_register,
            self.ioi_sd,
            self.silence_proportion,
            self.metrical_stress_rate,
            self.expressive_density,
            self.dynamic_variability,
        ];
        v.extend(self.accentuation_sd);
        v
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn population_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Total length covered by a set of `[start, end)` intervals.
fn union_length(mut intervals: Vec<(f64, f64)>) -> f64 {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (s, e) in intervals {
        match current {
            Some((cs, ce)) if s <= ce => current = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                current = Some((s, e));
            }
            None => current = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = current {
        total += ce - cs;
    }
    total
}

/// Share of `span_qn` not covered by any sounding interval, in `[0, 1]`.
pub fn silence_proportion(sounding: Vec<(f64, f64)>, span_qn: f64) -> f64 {
    if span_qn > 0.0 {
        (1.0 - union_length(sounding) / span_qn).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn metrical_weight(beat: f64, weights: &[f64; 3]) -> f64 {
    if (beat - 1.0).abs() < ONSET_TOLERANCE {
        weights[0]
    } else if (beat - beat.round()).abs() < ONSET_TOLERANCE {
        weights[1]
    } else {
        weights[2]
    }
}

/// Descriptors of one instance from its notes and the movement's harmony.
pub fn compute_instance_features(
    notes: &[&NoteEvent],
    movement: &Movement,
    config: &FeatureConfig,
) -> Result<FeatureVector> {
    if notes.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut sorted = notes.to_vec();
    sorted.sort_by(|a, b| {
        a.onset_qn
            .total_cmp(&b.onset_qn)
            .then(a.midi_pitch.cmp(&b.midi_pitch))
            .then(a.note_id.cmp(&b.note_id))
    });
    let notes = &sorted[..];
    let start = notes
        .iter()
        .map(|n| n.onset_qn)
        .fold(f64::INFINITY, f64::min);
    let end = notes
        .iter()
        .map(|n| n.offset_qn())
        .fold(f64::NEG_INFINITY, f64::max);
    let span = end - start;

    let chords = movement.harmony_overlapping(start, end)?;
    let complexity: Vec<f64> = chords.iter().map(|h| h.complexity).collect();
    let spread_harmonic_complexity = complexity.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - complexity.iter().copied().fold(f64::INFINITY, f64::min);
    let secondary_chord_proportion =
        chords.iter().filter(|h| h.is_secondary).count() as f64 / chords.len() as f64;
    let key_changes = chords
        .windows(2)
        .filter(|w| w[0].local_key != w[1].local_key)
        .count();
    let key_change_count = if span > 0.0 {
        key_changes as f64 / span
    } else {
        0.0
    };

    let pitches: Vec<f64> = notes.iter().map(|n| f64::from(n.midi_pitch)).collect();
    let pitch_spread = pitches.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - pitches.iter().copied().fold(f64::INFINITY, f64::min);
    let key = &movement.harmony_at(start)?.local_key;
    let tonic = key_tonic_pitch_class(key).ok_or_else(|| Error::UnknownKey(key.clone()))?;
    let motif_pitch_register = median(&mut pitches.clone()) - (60.0 + f64::from(tonic));

    let mut onsets: Vec<f64> = notes.iter().map(|n| n.onset_qn).collect();
    onsets.sort_by(f64::total_cmp);
    let iois: Vec<f64> = onsets.windows(2).map(|w| w[1] - w[0]).collect();
    let ioi_sd = if notes.len() < 3 {
        0.0
    } else {
        population_sd(&iois)
    };

    let silence_proportion = silence_proportion(
        notes.iter().map(|n| (n.onset_qn, n.offset_qn())).collect(),
        span,
    );

    let metrical_stress_rate = mean(
        &notes
            .iter()
            .map(|n| metrical_weight(n.beat, &config.metrical_weights))
            .collect::<Vec<_>>(),
    );
    let marks: Vec<f64> = notes
        .iter()
        .map(|n| f64::from(n.expressive_marks))
        .collect();
    let dynamics: Vec<f64> = notes.iter().map(|n| n.dynamic_level).collect();

    let fv = FeatureVector {
        spread_harmonic_complexity,
        secondary_chord_proportion,
        key_change_count,
        pitch_spread,
        motif_pitch_register,
        ioi_sd,
        silence_proportion,
        metrical_stress_rate,
        expressive_density: mean(&marks),
        dynamic_variability: population_sd(&dynamics),
        accentuation_sd: config.accentuation_sd.then(|| population_sd(&marks)),
    };
    if fv.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("instance features"));
    }
    Ok(fv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFeatures {
    pub movement_id: String,
    pub instance_id: i64,
    pub features: FeatureVector,
}

/// Features for every instance in canonical order.
pub fn compute_corpus_features(
    corpus: &Corpus,
    config: &FeatureConfig,
) -> Result<Vec<InstanceFeatures>> {
    let mut out = Vec::with_capacity(corpus.instance_count());
    for movement in corpus.movements.values() {
        for inst in &movement.instances {
            let notes = movement.instance_notes(inst)?;
            out.push(InstanceFeatures {
                movement_id: movement.id.clone(),
                instance_id: inst.instance_id,
                features: compute_instance_features(&notes, movement, config)?,
            });
        }
    }
    Ok(out)
}

/// Z-standardized features with a leading bias column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// `N x (p + 1)`; column 0 is the constant bias.
    pub x: DMatrix<f64>,
    /// Names of the columns of `x`, starting with `intercept`.
    pub columns: Vec<String>,
    /// Mean and population SD of each retained feature column (bias excluded).
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub dropped: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Serializable scaling record so raw-unit effects can be recovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMeta {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub dropped: Vec<String>,
    pub standardization: String,
}

impl DesignMatrix {
    pub fn meta(&self) -> DesignMeta {
        DesignMeta {
            columns: self.columns.clone(),
            means: self.means.clone(),
            sds: self.sds.clone(),
            dropped: self.dropped.clone(),
            standardization:
                "z-score with population SD; coefficients are per SD of the raw feature".to_string(),
        }
    }
}

/// Standardizes each feature column, dropping constant ones, and prepends
/// the bias column. `rows` are raw feature values in a fixed column order.
pub fn build_design_matrix(rows: &[Vec<f64>], names: &[String]) -> Result<DesignMatrix> {
    let n = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != names.len()) {
        return Err(Error::DimensionMismatch(format!(
            "feature row has {} values for {} columns",
            bad.len(),
            names.len()
        )));
    }
    let mut columns = vec!["intercept".to_string()];
    let mut kept = Vec::new();
    let (mut means, mut sds, mut dropped, mut diagnostics) = (vec![], vec![], vec![], vec![]);
    for (c, name) in names.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let (m, sd) = if n == 0 {
            (0.0, 0.0)
        } else {
            (mean(&col), population_sd(&col))
        };
        if !(sd > 1e-12) {
            dropped.push(name.clone());
            diagnostics.push(Diagnostic::new(
                "*",
                format!("feature {name}"),
                "constant column dropped",
            ));
            continue;
        }
        columns.push(name.clone());
        means.push(m);
        sds.push(sd);
        kept.push(c);
    }
    let x = DMatrix::from_fn(n, kept.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            (rows[i][kept[j - 1]] - means[j - 1]) / sds[j - 1]
        }
    });
    Ok(DesignMatrix {
        x,
        columns,
        means,
        sds,
        dropped,
        diagnostics,
    })
}
