//! Anchor selection, anchor-instance alignment and transformation labels.

mod align;
mod labels;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use align::{align_instances, global_alignment, AlignConfig, AlignedPair, Alignment};
pub use labels::{
    evaluate_labels, ContourMode, LabelConfig, LabelVector, Transformation, LABEL_COUNT,
};

use crate::error::Result;
use crate::score_model::{Corpus, NoteEvent};

/// Reference occurrence of one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorAssignment {
    pub movement_id: String,
    pub instance_id: i64,
    pub segment_id: usize,
    pub anchor_instance_id: i64,
    /// The instance is its own reference and receives the fixed
    /// Identity-only label.
    pub self_anchored: bool,
}

/// Chooses the reference of every instance and sets `is_anchor`.
///
/// Within a segment the earliest instance of a class is the anchor for the
/// others and is itself self-anchored. A class occurring once in a segment
/// refers to the most recent anchor of that class from an earlier segment of
/// the same movement; with no earlier anchor it becomes a self-anchored
/// anchor. Instances without a segment are treated as segment 0.
pub fn select_anchors(corpus: &mut Corpus) -> Vec<AnchorAssignment> {
    let mut out = Vec::new();
    for movement in corpus.movements.values_mut() {
        let mut groups: BTreeMap<(usize, i64), Vec<usize>> = BTreeMap::new();
        for (k, inst) in movement.instances.iter().enumerate() {
            groups
                .entry((inst.segment_id.unwrap_or(0), inst.motif_class_id))
                .or_default()
                .push(k);
        }
        let mut latest_anchor: HashMap<i64, i64> = HashMap::new();
        let mut reference: Vec<Option<(i64, bool)>> = vec![None; movement.instances.len()];
        for ((_, class), members) in &groups {
            let first = members[0];
            let first_id = movement.instances[first].instance_id;
            if members.len() == 1 {
                if let Some(&anchor) = latest_anchor.get(class) {
                    reference[first] = Some((anchor, false));
                    continue;
                }
            }
            movement.instances[first].is_anchor = true;
            reference[first] = Some((first_id, true));
            for &k in &members[1..] {
                reference[k] = Some((first_id, false));
            }
            latest_anchor.insert(*class, first_id);
        }
        for (inst, r) in movement.instances.iter().zip(reference) {
            let (anchor_instance_id, self_anchored) = r.expect("every instance belongs to a group");
            out.push(AnchorAssignment {
                movement_id: movement.id.clone(),
                instance_id: inst.instance_id,
                segment_id: inst.segment_id.unwrap_or(0),
                anchor_instance_id,
                self_anchored,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceLabels {
    pub movement_id: String,
    pub instance_id: i64,
    pub segment_id: usize,
    pub anchor_instance_id: i64,
    pub labels: LabelVector,
}

/// Selects anchors, aligns each instance to its reference and evaluates the
/// label vector. Output follows canonical instance order.
pub fn label_corpus(
    corpus: &mut Corpus,
    align: &AlignConfig,
    config: &LabelConfig,
) -> Result<Vec<InstanceLabels>> {
    let assignments = select_anchors(corpus);
    let mut out = Vec::with_capacity(assignments.len());
    for a in assignments {
        let movement = &corpus.movements[&a.movement_id];
        let labels = if a.self_anchored {
            LabelVector::self_anchored()
        } else {
            let lookup = |id: i64| -> Result<Vec<NoteEvent>> {
                let inst = movement
                    .instances
                    .iter()
                    .find(|i| i.instance_id == id)
                    .expect("anchor is an instance of the same movement");
                Ok(movement
                    .instance_notes(inst)?
                    .into_iter()
                    .cloned()
                    .collect())
            };
            let anchor_notes = lookup(a.anchor_instance_id)?;
            let instance_notes = lookup(a.instance_id)?;
            let alignment = align_instances(&anchor_notes, &instance_notes, align)?;
            evaluate_labels(&anchor_notes, &instance_notes, &alignment, movement, config)?
        };
        out.push(InstanceLabels {
            movement_id: a.movement_id,
            instance_id: a.instance_id,
            segment_id: a.segment_id,
            anchor_instance_id: a.anchor_instance_id,
            labels,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score_model::{MotifInstance, Movement, NoteEvent};

    fn corpus(instances: &[(i64, i64, usize, f64)]) -> Corpus {
        // (instance_id, class, segment, onset)
        let mut movement = Movement {
            id: "m".into(),
            ..Default::default()
        };
        for &(id, class, seg, onset) in instances {
            movement.notes.push(NoteEvent {
                movement_id: "m".into(),
                note_id: id,
                onset_qn: onset,
                duration_qn: 1.0,
                midi_pitch: 60,
                measure: 1,
                beat: 1.0,
                dynamic_level: 4.0,
                expressive_marks: 0,
            });
            movement.instances.push(MotifInstance {
                movement_id: "m".into(),
                motif_class_id: class,
                instance_id: id,
                note_ids: vec![id],
                segment_id: Some(seg),
                is_anchor: false,
            });
        }
        let mut c = Corpus::default();
        c.movements.insert("m".into(), movement);
        c
    }

    fn reference_of(a: &[AnchorAssignment], id: i64) -> (i64, bool) {
        let r = a.iter().find(|r| r.instance_id == id).unwrap();
        (r.anchor_instance_id, r.self_anchored)
    }

    #[test]
    fn earliest_instance_anchors_its_segment() {
        let mut c = corpus(&[(0, 7, 0, 4.0), (1, 7, 0, 12.0), (2, 7, 0, 20.0)]);
        let a = select_anchors(&mut c);
        assert_eq!(reference_of(&a, 0), (0, true));
        assert_eq!(reference_of(&a, 1), (0, false));
        assert_eq!(reference_of(&a, 2), (0, false));
        assert!(c.movements["m"].instances[0].is_anchor);
        assert!(!c.movements["m"].instances[1].is_anchor);
    }

    #[test]
    fn singleton_uses_most_recent_earlier_anchor() {
        let mut c = corpus(&[
            (0, 3, 0, 0.0),
            (1, 3, 0, 2.0),
            (2, 3, 2, 40.0),
            (3, 3, 2, 42.0),
            (4, 3, 5, 90.0),
        ]);
        let a = select_anchors(&mut c);
        assert_eq!(reference_of(&a, 4), (2, false));
        assert!(!c.movements["m"].instances[4].is_anchor);
    }

    #[test]
    fn first_ever_singleton_is_self_anchored() {
        let mut c = corpus(&[(0, 9, 1, 10.0), (1, 9, 3, 50.0)]);
        let a = select_anchors(&mut c);
        assert_eq!(reference_of(&a, 0), (0, true));
        assert_eq!(reference_of(&a, 1), (0, false));
        let labels = label_corpus(&mut c, &AlignConfig::default(), &LabelConfig::default());
        // no harmony in this toy movement: the referenced singleton needs it
        assert!(labels.is_err());
    }
}
