//! Rule-based phrase segmentation of movements.
//!
//! Candidate boundaries come from three cues: true silence across all
//! voices, a pitch repeated after at least a quarter note, and a dominant to
//! tonic change of harmonic function. Candidates inside annotated motif
//! instances are discarded, then a greedy left-to-right scan enforces the
//! minimum segment span in measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_model::{Corpus, Diagnostic, FunctionZone, Movement, ONSET_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cue {
    Silence,
    RepeatedPitch,
    Cadential,
}

impl Cue {
    fn is_strong(self) -> bool {
        !matches!(self, Cue::Cadential)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCandidate {
    pub onset_qn: f64,
    pub cue: Cue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: usize,
    pub movement_id: String,
    pub start_qn: f64,
    pub end_qn: f64,
    /// Ordered by onset of the first note.
    pub member_instance_ids: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub silence_min_qn: f64,
    pub repeat_min_qn: f64,
    pub cadential_cue: bool,
    pub min_span_measures: f64,
    pub proximity_measures: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            silence_min_qn: 1.0,
            repeat_min_qn: 1.0,
            cadential_cue: true,
            min_span_measures: 8.0,
            proximity_measures: 1.0,
        }
    }
}

/// Maps score time to a fractional measure position (`12.5` is halfway
/// through measure 12).
///
/// Measure starts are recovered from the notes as `onset - (beat - 1)`, so
/// `beat` is read in quarter-note units.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureMap {
    starts: Vec<(i64, f64)>,
}

impl MeasureMap {
    pub fn from_movement(movement: &Movement) -> Self {
        let mut starts: std::collections::BTreeMap<i64, f64> = Default::default();
        for n in &movement.notes {
            let s = n.onset_qn - (n.beat - 1.0);
            starts
                .entry(n.measure)
                .and_modify(|v| *v = v.min(s))
                .or_insert(s);
        }
        MeasureMap {
            starts: starts.into_iter().collect(),
        }
    }

    /// One measure per `length_qn` quarter notes, starting at measure 1.
    pub fn regular(length_qn: f64, measures: i64) -> Self {
        MeasureMap {
            starts: (1..=measures)
                .map(|m| (m, (m - 1) as f64 * length_qn))
                .collect(),
        }
    }

    fn measure_length(&self, k: usize) -> f64 {
        let per = |a: (i64, f64), b: (i64, f64)| (b.1 - a.1) / (b.0 - a.0) as f64;
        if k + 1 < self.starts.len() {
            per(self.starts[k], self.starts[k + 1])
        } else if k > 0 {
            per(self.starts[k - 1], self.starts[k])
        } else {
            4.0
        }
    }

    pub fn position(&self, qn: f64) -> f64 {
        if self.starts.is_empty() {
            return 1.0 + qn / 4.0;
        }
        let k = self
            .starts
            .partition_point(|&(_, s)| s <= qn + ONSET_TOLERANCE)
            .saturating_sub(1);
        let (m, s) = self.starts[k];
        let len = self.measure_length(k);
        if len > 0.0 {
            m as f64 + (qn - s) / len
        } else {
            m as f64
        }
    }
}

pub fn propose_boundaries(
    movement: &Movement,
    config: &SegmentationConfig,
) -> Result<Vec<BoundaryCandidate>> {
    if movement.notes.is_empty() {
        return Err(Error::EmptyMovement(movement.id.clone()));
    }
    let end = movement.end_qn();
    let mut notes: Vec<_> = movement.notes.iter().collect();
    notes.sort_by(|a, b| {
        a.onset_qn
            .total_cmp(&b.onset_qn)
            .then(a.midi_pitch.cmp(&b.midi_pitch))
    });

    let mut out = Vec::new();
    let mut sounding_until = notes[0].offset_qn();
    for n in &notes[1..] {
        if n.onset_qn - sounding_until >= config.silence_min_qn - ONSET_TOLERANCE {
            out.push(BoundaryCandidate {
                onset_qn: sounding_until,
                cue: Cue::Silence,
            });
        }
        sounding_until = sounding_until.max(n.offset_qn());
    }
    for w in notes.windows(2) {
        if w[0].midi_pitch == w[1].midi_pitch
            && w[1].onset_qn - w[0].onset_qn >= config.repeat_min_qn - ONSET_TOLERANCE
        {
            out.push(BoundaryCandidate {
                onset_qn: w[1].offset_qn(),
                cue: Cue::RepeatedPitch,
            });
        }
    }
    if config.cadential_cue {
        for w in movement.harmony.windows(2) {
            if w[0].function_zone == FunctionZone::D && w[1].function_zone == FunctionZone::T {
                out.push(BoundaryCandidate {
                    onset_qn: w[1].onset_qn,
                    cue: Cue::Cadential,
                });
            }
        }
    }
    out.retain(|c| c.onset_qn > ONSET_TOLERANCE && c.onset_qn < end - ONSET_TOLERANCE);
    out.sort_by(|a, b| a.onset_qn.total_cmp(&b.onset_qn).then(a.cue.cmp(&b.cue)));

    let mut deduped: Vec<BoundaryCandidate> = Vec::with_capacity(out.len());
    let mut group_start = f64::NEG_INFINITY;
    for c in out {
        match deduped.last_mut() {
            Some(last) if c.onset_qn - group_start <= ONSET_TOLERANCE => {
                if c.cue < last.cue {
                    *last = c;
                }
            }
            _ => {
                group_start = c.onset_qn;
                deduped.push(c);
            }
        }
    }
    Ok(deduped)
}

/// Drops candidates strictly inside any `(start, end)` motif span, then keeps
/// candidates left to right that lie at least `min_span_measures` after the
/// previously kept one. When a cadential candidate is eligible and a silence
/// or repeated-pitch candidate follows within `proximity_measures`, the
/// stronger cue wins.
pub fn filter_boundaries(
    candidates: &[BoundaryCandidate],
    motif_spans: &[(f64, f64)],
    measures: &MeasureMap,
    config: &SegmentationConfig,
) -> Vec<BoundaryCandidate> {
    let survivors: Vec<(f64, BoundaryCandidate)> = candidates
        .iter()
        .filter(|c| {
            !motif_spans
                .iter()
                .any(|&(s, e)| c.onset_qn > s + ONSET_TOLERANCE && c.onset_qn < e - ONSET_TOLERANCE)
        })
        .map(|c| (measures.position(c.onset_qn), *c))
        .collect();

    let mut kept = Vec::new();
    let mut last_pos: Option<f64> = None;
    let mut i = 0;
    while i < survivors.len() {
        let (pos, cand) = survivors[i];
        if let Some(lp) = last_pos {
            if pos - lp < config.min_span_measures - ONSET_TOLERANCE {
                i += 1;
                continue;
            }
        }
        let mut choice = i;
        if !cand.cue.is_strong() {
            if let Some(j) = survivors[i + 1..]
                .iter()
                .take_while(|(p, _)| *p <= pos + config.proximity_measures + ONSET_TOLERANCE)
                .position(|(_, c)| c.cue.is_strong())
            {
                choice = i + 1 + j;
            }
        }
        kept.push(survivors[choice].1);
        last_pos = Some(survivors[choice].0);
        i = choice + 1;
    }
    kept
}

/// `[first onset, last offset]` of every instance in the movement.
pub fn motif_spans(movement: &Movement) -> Result<Vec<(f64, f64)>> {
    movement
        .instances
        .iter()
        .map(|inst| {
            let notes = movement.instance_notes(inst)?;
            let start = notes
                .iter()
                .map(|n| n.onset_qn)
                .fold(f64::INFINITY, f64::min);
            let end = notes
                .iter()
                .map(|n| n.offset_qn())
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((start, end))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MovementSegmentation {
    pub boundaries: Vec<BoundaryCandidate>,
    pub segments: Vec<Segment>,
    /// Segment index of every instance, in the movement's instance order.
    pub assignment: Vec<usize>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Splits the movement at `boundaries` and assigns each instance to the
/// segment containing its first note.
pub fn assign_segments(movement: &Movement, boundaries: &[f64]) -> Result<MovementSegmentation> {
    let end = movement.end_qn();
    let mut cuts = vec![0.0];
    cuts.extend(boundaries.iter().copied());
    cuts.push(end);
    let mut segments: Vec<Segment> = cuts
        .windows(2)
        .enumerate()
        .map(|(k, w)| Segment {
            segment_id: k,
            movement_id: movement.id.clone(),
            start_qn: w[0],
            end_qn: w[1],
            member_instance_ids: Vec::new(),
        })
        .collect();
    let spans = motif_spans(movement)?;
    let mut assignment = Vec::with_capacity(spans.len());
    let mut diagnostics = Vec::new();
    for (inst, &(start, stop)) in movement.instances.iter().zip(&spans) {
        let k = boundaries.partition_point(|&b| b <= start + ONSET_TOLERANCE);
        segments[k].member_instance_ids.push(inst.instance_id);
        assignment.push(k);
        if boundaries
            .iter()
            .any(|&b| b > start + ONSET_TOLERANCE && b < stop - ONSET_TOLERANCE)
        {
            diagnostics.push(Diagnostic::new(
                &movement.id,
                format!("instance {}", inst.instance_id),
                "instance straddles a segment boundary",
            ));
        }
    }
    Ok(MovementSegmentation {
        boundaries: boundaries
            .iter()
            .map(|&b| BoundaryCandidate {
                onset_qn: b,
                cue: Cue::Silence,
            })
            .collect(),
        segments,
        assignment,
        diagnostics,
    })
}

pub fn segment_movement(
    movement: &Movement,
    config: &SegmentationConfig,
) -> Result<MovementSegmentation> {
    let candidates = propose_boundaries(movement, config)?;
    let spans = motif_spans(movement)?;
    let measures = MeasureMap::from_movement(movement);
    let accepted = filter_boundaries(&candidates, &spans, &measures, config);
    let cuts: Vec<f64> = accepted.iter().map(|c| c.onset_qn).collect();
    let mut seg = assign_segments(movement, &cuts)?;
    seg.boundaries = accepted;
    if let Some(last) = seg.segments.last() {
        if seg.segments.len() > 1 {
            let span = measures.position(last.end_qn) - measures.position(last.start_qn);
            if span < config.min_span_measures - ONSET_TOLERANCE {
                seg.diagnostics.push(Diagnostic::new(
                    &movement.id,
                    format!("segment {}", last.segment_id),
                    "trailing segment shorter than minimum span",
                ));
            }
        }
    }
    Ok(seg)
}

/// Segments every movement and writes `segment_id` into each instance.
/// Returns the per-movement segmentation keyed like the corpus.
pub fn segment_corpus(
    corpus: &mut Corpus,
    config: &SegmentationConfig,
) -> Result<Vec<MovementSegmentation>> {
    let mut out = Vec::with_capacity(corpus.movements.len());
    for movement in corpus.movements.values_mut() {
        let seg = segment_movement(movement, config)?;
        for (inst, &k) in movement.instances.iter_mut().zip(&seg.assignment) {
            inst.segment_id = Some(k);
        }
        out.push(seg);
    }
    Ok(out)
}
