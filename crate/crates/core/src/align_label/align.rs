//! Note-level alignment of a motif instance against its anchor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_model::NoteEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub pitch_weight: f64,
    pub beat_weight: f64,
    pub duration_weight: f64,
    pub gap_penalty: f64,
    /// Equal-length sequences whose positionwise pitch distance never exceeds
    /// this many semitones are matched one-to-one without running the DP.
    pub match_tolerance: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            pitch_weight: 1.0,
            beat_weight: 0.5,
            duration_weight: 0.5,
            gap_penalty: 4.0,
            match_tolerance: 12.0,
        }
    }
}

impl AlignConfig {
    pub fn match_cost(&self, a: &NoteEvent, b: &NoteEvent) -> f64 {
        self.pitch_weight * (f64::from(a.midi_pitch) - f64::from(b.midi_pitch)).abs()
            + self.beat_weight * (a.beat - b.beat).abs()
            + self.duration_weight * (a.duration_qn - b.duration_qn).abs()
    }
}

/// One column of an alignment: `(anchor index, instance index)`, `None`
/// marking a gap on that side. Gap-gap columns never occur.
pub type AlignedPair = (Option<usize>, Option<usize>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<AlignedPair>,
    pub cost: f64,
}

impl Alignment {
    pub fn identity(len: usize) -> Self {
        Alignment {
            pairs: (0..len).map(|k| (Some(k), Some(k))).collect(),
            cost: 0.0,
        }
    }

    /// Matched `(anchor, instance)` index pairs in order.
    pub fn matches(&self) -> Vec<(usize, usize)> {
        self.pairs
            .iter()
            .filter_map(|&(a, b)| Some((a?, b?)))
            .collect()
    }

    pub fn gap_count(&self) -> usize {
        self.pairs
            .iter()
            .filter(|(a, b)| a.is_none() || b.is_none())
            .count()
    }

    /// Both index sequences strictly increasing and complete.
    pub fn is_valid(&self, anchor_len: usize, instance_len: usize) -> bool {
        let side = |pick: fn(&AlignedPair) -> Option<usize>, len: usize| {
            let idx: Vec<usize> = self.pairs.iter().filter_map(pick).collect();
            idx.len() == len && idx.iter().enumerate().all(|(k, &i)| k == i)
        };
        self.pairs.iter().all(|(a, b)| a.is_some() || b.is_some())
            && side(|p| p.0, anchor_len)
            && side(|p| p.1, instance_len)
    }

    pub fn cost_under(
        &self,
        anchor: &[NoteEvent],
        instance: &[NoteEvent],
        config: &AlignConfig,
    ) -> f64 {
        self.pairs.iter().fold(0.0, |acc, &(a, b)| match (a, b) {
            (Some(i), Some(j)) => acc + config.match_cost(&anchor[i], &instance[j]),
            _ => acc + config.gap_penalty,
        })
    }
}

/// Global (Needleman-Wunsch) alignment minimizing summed match costs plus
/// gap penalties. Ties prefer a match, then a gap on the anchor side
/// (an instance note inserted), then an instance-side gap.
pub fn global_alignment(
    anchor: &[NoteEvent],
    instance: &[NoteEvent],
    config: &AlignConfig,
) -> Result<Alignment> {
    if anchor.is_empty() || instance.is_empty() {
        return Err(Error::EmptySequence);
    }
    let (n, m) = (anchor.len(), instance.len());
    let g = config.gap_penalty;
    let w = m + 1;
    let mut table = vec![0.0f64; (n + 1) * w];
    for i in 1..=n {
        table[i * w] = table[(i - 1) * w] + g;
    }
    for j in 1..=m {
        table[j] = table[j - 1] + g;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag =
                table[(i - 1) * w + j - 1] + config.match_cost(&anchor[i - 1], &instance[j - 1]);
            let insert = table[i * w + j - 1] + g;
            let delete = table[(i - 1) * w + j] + g;
            table[i * w + j] = diag.min(insert).min(delete);
        }
    }

    let mut pairs = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = table[i * w + j];
        if i > 0
            && j > 0
            && here
                == table[(i - 1) * w + j - 1] + config.match_cost(&anchor[i - 1], &instance[j - 1])
        {
            pairs.push((Some(i - 1), Some(j - 1)));
            i -= 1;
            j -= 1;
        } else if j > 0 && (i == 0 || here == table[i * w + j - 1] + g) {
            pairs.push((None, Some(j - 1)));
            j -= 1;
        } else {
            pairs.push((Some(i - 1), None));
            i -= 1;
        }
    }
    pairs.reverse();
    Ok(Alignment {
        pairs,
        cost: table[n * w + m],
    })
}

/// One-to-one matching when the sequences have equal length and stay within
/// the pitch tolerance position by position; the DP alignment otherwise.
pub fn align_instances(
    anchor: &[NoteEvent],
    instance: &[NoteEvent],
    config: &AlignConfig,
) -> Result<Alignment> {
    if anchor.is_empty() || instance.is_empty() {
        return Err(Error::EmptySequence);
    }
    let simple = anchor.len() == instance.len()
        && anchor.iter().zip(instance).all(|(a, b)| {
            (f64::from(a.midi_pitch) - f64::from(b.midi_pitch)).abs() <= config.match_tolerance
        });
    if simple {
        let mut alignment = Alignment::identity(anchor.len());
        alignment.cost = alignment.cost_under(anchor, instance, config);
        return Ok(alignment);
    }
    global_alignment(anchor, instance, config)
}
