//! Property tests for ingestion, segmentation, labels, features and graphs.

mod common;

use motif_crf::align_label::{
    evaluate_labels, global_alignment, AlignConfig, Alignment, LabelConfig, Transformation,
};
use motif_crf::features::{build_design_matrix, compute_instance_features, FeatureConfig};
use motif_crf::graph::{build_adjacency, GraphConfig};
use motif_crf::score_model::{
    assemble_corpus, load_corpus, save_corpus, Corpus, FunctionZone, HarmonyEvent, MotifInstance,
    NoteEvent,
};
use motif_crf::segmentation::{motif_spans, segment_movement, MeasureMap, SegmentationConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const KEYS: [&str; 6] = ["C", "G", "a", "Eb", "f#", "Bb"];
const ZONES: [FunctionZone; 3] = [FunctionZone::T, FunctionZone::PD, FunctionZone::D];
const DURATIONS: [f64; 5] = [0.25, 0.5, 1.0, 1.5, 2.0];

/// Raw tables of a random corpus: monophonic lines with occasional rests
/// and chords, harmony every measure, motifs over consecutive notes.
fn random_tables(
    rng: &mut ChaCha8Rng,
    movements: usize,
) -> (Vec<NoteEvent>, Vec<HarmonyEvent>, Vec<MotifInstance>) {
    let (mut notes, mut harmony, mut motifs) = (Vec::new(), Vec::new(), Vec::new());
    for m in 0..movements {
        let id = format!("mv{m}");
        let mut onset = 0.0;
        let mut ids = Vec::new();
        for k in 0..rng.random_range(4..40) {
            let duration = DURATIONS[rng.random_range(0..DURATIONS.len())];
            let chord = k > 0 && rng.random_bool(0.1);
            if chord {
                onset -= notes
                    .last()
                    .map(|n: &NoteEvent| n.duration_qn)
                    .unwrap_or(0.0);
            }
            notes.push(NoteEvent {
                movement_id: id.clone(),
                note_id: k as i64 * 3 + 1,
                onset_qn: onset,
                duration_qn: duration,
                midi_pitch: rng.random_range(40..=90),
                measure: (onset / 4.0).floor() as i64 + 1,
                beat: onset % 4.0 + 1.0,
                dynamic_level: rng.random_range(1..=7) as f64,
                expressive_marks: rng.random_range(0..3),
            });
            ids.push(k as i64 * 3 + 1);
            onset += duration;
            if rng.random_bool(0.15) {
                onset += rng.random_range(1..4) as f64;
            }
        }
        let mut t = 0.0;
        while t < onset {
            harmony.push(HarmonyEvent {
                movement_id: id.clone(),
                onset_qn: t,
                local_key: KEYS[rng.random_range(0..KEYS.len())].to_string(),
                function_zone: ZONES[rng.random_range(0..3)],
                is_secondary: rng.random_bool(0.2),
                complexity: rng.random::<f64>() * 5.0,
            });
            t += 4.0;
        }
        let mut start = 0;
        let mut instance = 0;
        while start + 2 <= ids.len() {
            let len = rng.random_range(2..=5).min(ids.len() - start);
            if rng.random_bool(0.8) {
                motifs.push(MotifInstance {
                    movement_id: id.clone(),
                    motif_class_id: rng.random_range(1..=3),
                    instance_id: instance,
                    note_ids: ids[start..start + len].to_vec(),
                    segment_id: None,
                    is_anchor: false,
                });
                instance += 1;
            }
            start += len;
        }
    }
    (notes, harmony, motifs)
}

fn random_corpus(seed: u64) -> Corpus {
    let mut rng = common::rng(seed);
    let (n, h, m) = random_tables(&mut rng, 2);
    assemble_corpus(n, h, m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_then_load_is_identity(seed in any::<u64>()) {
        let corpus = random_corpus(seed);
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, dir.path()).unwrap();
        let back = load_corpus(
            dir.path().join("notes.csv"),
            dir.path().join("harmony.csv"),
            dir.path().join("motifs.csv"),
        )
        .unwrap();
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn loading_ignores_row_order(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (n, h, m) = random_tables(&mut rng, 3);
        let reference = assemble_corpus(n.clone(), h.clone(), m.clone()).unwrap();
        let (mut n, mut h, mut m) = (n, h, m);
        n.shuffle(&mut rng);
        h.shuffle(&mut rng);
        m.shuffle(&mut rng);
        for inst in &mut m {
            inst.note_ids.shuffle(&mut rng);
        }
        prop_assert_eq!(assemble_corpus(n, h, m).unwrap(), reference);
    }

    #[test]
    fn segmentation_partitions_and_respects_spans(seed in any::<u64>(), min_span in 1u32..6) {
        let corpus = random_corpus(seed);
        let config = SegmentationConfig { min_span_measures: min_span as f64, ..Default::default() };
        for movement in corpus.movements.values() {
            let seg = segment_movement(movement, &config).unwrap();
            prop_assert_eq!(&seg, &segment_movement(movement, &config).unwrap());
            let segs = &seg.segments;
            prop_assert_eq!(segs[0].start_qn, 0.0);
            prop_assert_eq!(segs.last().unwrap().end_qn, movement.end_qn());
            for w in segs.windows(2) {
                prop_assert_eq!(w[0].end_qn, w[1].start_qn);
                prop_assert!(w[0].start_qn < w[0].end_qn);
            }
            let members: usize = segs.iter().map(|s| s.member_instance_ids.len()).sum();
            prop_assert_eq!(members, movement.instances.len());
            let measures = MeasureMap::from_movement(movement);
            for w in seg.boundaries.windows(2) {
                let gap = measures.position(w[1].onset_qn) - measures.position(w[0].onset_qn);
                prop_assert!(gap >= min_span as f64 - 1e-6);
            }
            for b in &seg.boundaries {
                for &(s, e) in &motif_spans(movement).unwrap() {
                    prop_assert!(!(b.onset_qn > s + 1e-6 && b.onset_qn < e - 1e-6));
                }
            }
        }
    }

    #[test]
    fn design_columns_are_standardized(seed in any::<u64>(), n in 3usize..60, p in 1usize..6) {
        let mut rng = common::rng(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|j| rng.random::<f64>() * 10f64.powi(j as i32 - 2) + j as f64).collect())
            .collect();
        let names: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
        let d = build_design_matrix(&rows, &names).unwrap();
        prop_assert!(d.x.column(0).iter().all(|&v| v == 1.0));
        for j in 1..d.x.ncols() {
            let col: Vec<f64> = d.x.column(j).iter().copied().collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((sd - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn features_are_bounded_and_ignore_chord_order(seed in any::<u64>()) {
        let corpus = random_corpus(seed);
        let mut rng = common::rng(seed ^ 0x5eed);
        let config = FeatureConfig { accentuation_sd: true, ..Default::default() };
        for movement in corpus.movements.values() {
            for inst in &movement.instances {
                let notes = movement.instance_notes(inst).unwrap();
                let f = compute_instance_features(&notes, movement, &config).unwrap();
                prop_assert!((0.0..=1.0).contains(&f.silence_proportion));
                prop_assert!((0.0..=1.0).contains(&f.secondary_chord_proportion));
                // Shuffle notes sharing an onset.
                let mut reordered = notes.clone();
                let mut start = 0;
                while start < reordered.len() {
                    let onset = reordered[start].onset_qn;
                    let end = start + reordered[start..].iter().take_while(|n| n.onset_qn == onset).count();
                    reordered[start..end].shuffle(&mut rng);
                    start = end;
                }
                prop_assert_eq!(compute_instance_features(&reordered, movement, &config).unwrap(), f);
            }
        }
    }

    #[test]
    fn adjacency_is_symmetric_and_block_diagonal(
        sizes in prop::collection::vec(1usize..9, 1..8),
        sigma in 0.3f64..4.0,
        normalize in any::<bool>(),
    ) {
        let segments = common::blocks(&sizes);
        let n: usize = sizes.iter().sum();
        let config = GraphConfig { sigma, prune_threshold: 1e-5, normalize };
        let a = common::dense(&build_adjacency(n, &segments, &config).unwrap());
        let segment_of: Vec<usize> = segments.iter().enumerate().flat_map(|(s, m)| m.iter().map(move |_| s)).collect();
        for i in 0..n {
            prop_assert_eq!(a[(i, i)], 0.0);
            for j in 0..n {
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
                prop_assert!(a[(i, j)] >= 0.0);
                if segment_of[i] != segment_of[j] {
                    prop_assert_eq!(a[(i, j)], 0.0);
                }
            }
        }
        for (s, &len) in sizes.iter().enumerate() {
            if len == 1 {
                let i = segments[s][0];
                prop_assert!(a.row(i).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn unpruned_raw_weights_follow_gaussian_decay(len in 1usize..12, sigma in 0.3f64..5.0) {
        let config = GraphConfig { sigma, prune_threshold: 0.0, normalize: false };
        let a = common::dense(&build_adjacency(len, &[(0..len).collect()], &config).unwrap());
        for i in 0..len {
            for j in 0..len {
                let d = i as f64 - j as f64;
                let expected = if i == j { 0.0 } else { (-(d * d) / (sigma * sigma)).exp() };
                prop_assert!((a[(i, j)] - expected).abs() <= 1e-15 * expected.max(1e-300));
            }
        }
    }
}

fn random_melody(rng: &mut ChaCha8Rng, len: usize) -> Vec<NoteEvent> {
    let pitches: Vec<u8> = (0..len).map(|_| rng.random_range(50..=80)).collect();
    let durs: Vec<f64> = (0..len)
        .map(|_| DURATIONS[rng.random_range(0..DURATIONS.len())])
        .collect();
    common::melody(&pitches, &durs)
}

fn labels(
    anchor: &[NoteEvent],
    instance: &[NoteEvent],
    alignment: &Alignment,
) -> motif_crf::align_label::LabelVector {
    let mut movement = motif_crf::score_model::Movement::default();
    movement.harmony.push(HarmonyEvent {
        movement_id: "m".into(),
        onset_qn: 0.0,
        local_key: "C".into(),
        function_zone: FunctionZone::T,
        is_secondary: false,
        complexity: 0.0,
    });
    evaluate_labels(
        anchor,
        instance,
        alignment,
        &movement,
        &LabelConfig::default(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn self_comparison_is_identity(seed in any::<u64>(), len in 1usize..9) {
        let x = random_melody(&mut common::rng(seed), len);
        let l = labels(&x, &x, &Alignment::identity(len));
        prop_assert!(l[Transformation::Identity]);
        prop_assert!(!l[Transformation::NoteEdit]);
    }

    #[test]
    fn transposition_and_tempo_invariance(seed in any::<u64>(), la in 2usize..7, lb in 2usize..7, k in -12i32..=12, c in prop::sample::select(vec![0.5, 1.5, 2.0, 3.0])) {
        use Transformation::*;
        let mut rng = common::rng(seed);
        let anchor = random_melody(&mut rng, la);
        let instance = random_melody(&mut rng, lb);
        let alignment = global_alignment(&anchor, &instance, &AlignConfig::default()).unwrap();
        let base = labels(&anchor, &instance, &alignment);
        let shifted: Vec<NoteEvent> = instance
            .iter()
            .map(|n| NoteEvent { midi_pitch: (i32::from(n.midi_pitch) + k) as u8, ..n.clone() })
            .collect();
        let moved = labels(&anchor, &shifted, &alignment);
        for t in [Contour, Rhythm, NoteEdit] {
            prop_assert_eq!(moved[t], base[t], "{:?}", t);
        }
        if k % 12 == 0 {
            prop_assert_eq!(moved[Intervallic], base[Intervallic]);
        }
        if base[Rhythm] {
            let stretched: Vec<NoteEvent> = instance
                .iter()
                .map(|n| NoteEvent { onset_qn: n.onset_qn * c, duration_qn: n.duration_qn * c, ..n.clone() })
                .collect();
            prop_assert!(labels(&anchor, &stretched, &alignment)[Rhythm]);
        }
    }
}
