//! The eight binary transformation labels of an instance relative to its
//! anchor, evaluated on the matched pairs of an alignment.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use super::align::Alignment;
use crate::error::Result;
use crate::score_model::{Movement, NoteEvent};

pub const LABEL_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Transformation {
    Identity,
    Contour,
    SalientLeap,
    Rhythm,
    NoteEdit,
    Harmony,
    Intervallic,
    Symmetry,
}

impl Transformation {
    pub const ALL: [Transformation; LABEL_COUNT] = [
        Transformation::Identity,
        Transformation::Contour,
        Transformation::SalientLeap,
        Transformation::Rhythm,
        Transformation::NoteEdit,
        Transformation::Harmony,
        Transformation::Intervallic,
        Transformation::Symmetry,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name in `labels.csv`.
    pub fn column(self) -> &'static str {
        match self {
            Transformation::Identity => "y_identity",
            Transformation::Contour => "y_contour",
            Transformation::SalientLeap => "y_salient_leap",
            Transformation::Rhythm => "y_rhythm",
            Transformation::NoteEdit => "y_note_edit",
            Transformation::Harmony => "y_harmony",
            Transformation::Intervallic => "y_intervallic",
            Transformation::Symmetry => "y_symmetry",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Transformation::Identity => "Identity",
            Transformation::Contour => "Contour",
            Transformation::SalientLeap => "Salient Leap",
            Transformation::Rhythm => "Rhythm",
            Transformation::NoteEdit => "Note Addition/Removal",
            Transformation::Harmony => "Harmony",
            Transformation::Intervallic => "Intervallic",
            Transformation::Symmetry => "Symmetry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LabelVector(pub [bool; LABEL_COUNT]);

impl LabelVector {
    /// Label of an instance that serves as its own reference.
    pub fn self_anchored() -> Self {
        let mut v = LabelVector::default();
        v.set(Transformation::Identity, true);
        v
    }

    pub fn set(&mut self, t: Transformation, value: bool) {
        self.0[t.index()] = value;
    }

    pub fn as_f64(&self) -> [f64; LABEL_COUNT] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }
}

impl Index<Transformation> for LabelVector {
    type Output = bool;

    fn index(&self, t: Transformation) -> &bool {
        &self.0[t.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContourMode {
    /// Interval sizes must differ somewhere.
    Strict,
    /// Direction agreement alone suffices.
    Loose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    /// Smallest interval, in semitones, counted as a salient leap.
    pub leap_threshold: i32,
    pub contour_mode: ContourMode,
    pub identity_rel_tol: f64,
    pub rhythm_rel_tol: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            leap_threshold: 5,
            contour_mode: ContourMode::Strict,
            identity_rel_tol: 1e-6,
            rhythm_rel_tol: 1e-3,
        }
    }
}

/// `b = c * a` for a single `c > 0`, entrywise within relative tolerance.
fn proportional(a: &[f64], b: &[f64], rel_tol: f64) -> bool {
    if a.len() != b.len() || a.is_empty() {
        return false;
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if !(sa > 0.0 && sb > 0.0) {
        return false;
    }
    let c = sb / sa;
    a.iter().zip(b).all(|(&x, &y)| {
        let scaled = c * x;
        (y - scaled).abs() <= rel_tol * scaled.abs().max(y.abs()) + 1e-12
    })
}

fn successive_differences(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn evaluate_labels(
    anchor: &[NoteEvent],
    instance: &[NoteEvent],
    alignment: &Alignment,
    harmony: &Movement,
    config: &LabelConfig,
) -> Result<LabelVector> {
    use Transformation::*;

    let matches = alignment.matches();
    let pitch = |n: &NoteEvent| i32::from(n.midi_pitch);
    let anchor_pitches: Vec<i32> = matches.iter().map(|&(a, _)| pitch(&anchor[a])).collect();
    let instance_pitches: Vec<i32> = matches.iter().map(|&(_, b)| pitch(&instance[b])).collect();
    let anchor_iv: Vec<i32> = anchor_pitches.windows(2).map(|w| w[1] - w[0]).collect();
    let instance_iv: Vec<i32> = instance_pitches.windows(2).map(|w| w[1] - w[0]).collect();
    let has_intervals = !anchor_iv.is_empty();
    let mut y = LabelVector::default();

    let no_gaps = alignment.gap_count() == 0 && anchor.len() == instance.len();
    let anchor_durs: Vec<f64> = matches
        .iter()
        .map(|&(a, _)| anchor[a].duration_qn)
        .collect();
    let instance_durs: Vec<f64> = matches
        .iter()
        .map(|&(_, b)| instance[b].duration_qn)
        .collect();
    y.set(
        Identity,
        no_gaps
            && anchor_pitches == instance_pitches
            && proportional(&anchor_durs, &instance_durs, config.identity_rel_tol),
    );

    let same_directions = anchor_iv
        .iter()
        .zip(&instance_iv)
        .all(|(a, b)| a.signum() == b.signum());
    let sizes_differ = anchor_iv != instance_iv;
    y.set(
        Contour,
        has_intervals
            && same_directions
            && (sizes_differ || config.contour_mode == ContourMode::Loose),
    );

    let leaps: Vec<usize> = (0..anchor_iv.len())
        .filter(|&k| anchor_iv[k].abs() >= config.leap_threshold)
        .collect();
    y.set(
        SalientLeap,
        !leaps.is_empty()
            && leaps.iter().all(|&k| {
                instance_iv[k].abs() >= config.leap_threshold
                    && instance_iv[k].signum() == anchor_iv[k].signum()
            }),
    );

    let anchor_onsets: Vec<f64> = matches.iter().map(|&(a, _)| anchor[a].onset_qn).collect();
    let instance_onsets: Vec<f64> = matches.iter().map(|&(_, b)| instance[b].onset_qn).collect();
    y.set(
        Rhythm,
        has_intervals
            && proportional(
                &successive_differences(&anchor_onsets),
                &successive_differences(&instance_onsets),
                config.rhythm_rel_tol,
            ),
    );

    y.set(NoteEdit, has_structural_edit(anchor, instance, alignment));

    let mut zones_agree = !matches.is_empty();
    for &(a, b) in &matches {
        let za = harmony.harmony_at(anchor[a].onset_qn)?.function_zone;
        let zb = harmony.harmony_at(instance[b].onset_qn)?.function_zone;
        zones_agree &= za == zb;
    }
    y.set(Harmony, zones_agree);

    y.set(
        Intervallic,
        has_intervals
            && anchor_iv
                .iter()
                .zip(&instance_iv)
                .all(|(a, b)| (a - b).rem_euclid(12) == 0 && a.signum() == b.signum()),
    );

    let inversion = anchor_iv.iter().any(|&d| d != 0)
        && anchor_iv.iter().zip(&instance_iv).all(|(a, b)| *b == -*a);
    let reordering = sizes_differ && {
        let (mut sa, mut sb) = (anchor_iv.clone(), instance_iv.clone());
        sa.sort_unstable();
        sb.sort_unstable();
        sa == sb
    };
    y.set(
        Symmetry,
        has_intervals && (inversion || reordering) && !y[Identity],
    );

    Ok(y)
}

/// A gap counts as a structural note edit when the inserted or deleted pitch
/// differs from the nearest matched pitches on the same side.
fn has_structural_edit(
    anchor: &[NoteEvent],
    instance: &[NoteEvent],
    alignment: &Alignment,
) -> bool {
    let pairs = &alignment.pairs;
    let matched_anchor = |p: &(Option<usize>, Option<usize>)| p.1.and(p.0);
    let matched_instance = |p: &(Option<usize>, Option<usize>)| p.0.and(p.1);
    pairs.iter().enumerate().any(|(k, &pair)| {
        let (notes, idx, side): (&[NoteEvent], usize, &dyn Fn(&_) -> Option<usize>) = match pair {
            (None, Some(j)) => (instance, j, &matched_instance),
            (Some(i), None) => (anchor, i, &matched_anchor),
            _ => return false,
        };
        let pitch = notes[idx].midi_pitch;
        let before = pairs[..k].iter().rev().find_map(side);
        let after = pairs[k + 1..].iter().find_map(side);
        [before, after]
            .into_iter()
            .flatten()
            .all(|n| notes[n].midi_pitch != pitch)
    })
}
