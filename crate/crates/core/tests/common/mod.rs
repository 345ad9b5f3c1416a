//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code under test except to build inputs.
#![allow(dead_code)]

use motif_crf::graph::Adjacency;
use motif_crf::score_model::NoteEvent;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `N x (p + 1)` with a leading bias column and standard normal entries.
pub fn normal_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p + 1, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.sample(StandardNormal)
        }
    })
}

pub fn bernoulli_labels(rng: &mut ChaCha8Rng, n: usize, q: usize, rate: f64) -> DMatrix<f64> {
    DMatrix::from_fn(
        n,
        q,
        |_, _| if rng.random::<f64>() < rate { 1.0 } else { 0.0 },
    )
}

/// Consecutive row blocks of the given sizes.
pub fn blocks(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for &s in sizes {
        out.push((start..start + s).collect());
        start += s;
    }
    out
}

fn sigmoid_direct(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Sum over labels of the Bernoulli log-likelihood of independent logistic
/// regressions `P(y_iq = 1) = 1 / (1 + exp(-x_i . alpha_q))`.
pub fn independent_logistic_loglik(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    alpha: &DMatrix<f64>,
) -> f64 {
    let mut total = 0.0;
    for q in 0..y.ncols() {
        for i in 0..x.nrows() {
            let mut eta = 0.0;
            for j in 0..x.ncols() {
                eta += x[(i, j)] * alpha[(j, q)];
            }
            let p = sigmoid_direct(eta);
            total += if y[(i, q)] == 1.0 {
                p.ln()
            } else {
                (1.0 - p).ln()
            };
        }
    }
    total
}

/// Joint log-potential with the pairwise energy counted once per unordered
/// pair: `sum_iq y_iq x_i alpha_q + 1/2 sum_{i != j} A_ij sum_qr y_iq y_jr beta_qr`.
pub fn joint_energy(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    alpha: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> f64 {
    let (n, q) = y.shape();
    let mut e = 0.0;
    for i in 0..n {
        for l in 0..q {
            if y[(i, l)] == 1.0 {
                for f in 0..x.ncols() {
                    e += x[(i, f)] * alpha[(f, l)];
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for l in 0..q {
                for r in 0..q {
                    e += 0.5 * a[(i, j)] * y[(i, l)] * y[(j, r)] * beta[(l, r)];
                }
            }
        }
    }
    e
}

/// Every `N x Q` binary configuration, in binary counting order.
pub fn all_configurations(n: usize, q: usize) -> Vec<DMatrix<f64>> {
    (0..1usize << (n * q))
        .map(|code| DMatrix::from_fn(n, q, |i, l| ((code >> (i * q + l)) & 1) as f64))
        .collect()
}

/// Exact joint distribution over all configurations.
pub fn exact_joint(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    alpha: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    q: usize,
) -> Vec<f64> {
    let configs = all_configurations(x.nrows(), q);
    let energies: Vec<f64> = configs
        .iter()
        .map(|y| joint_energy(x, a, alpha, beta, y))
        .collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = energies.iter().map(|e| (e - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.iter().map(|w| w / z).collect()
}

pub fn config_code(y: &DMatrix<f64>) -> usize {
    let q = y.ncols();
    let mut code = 0;
    for i in 0..y.nrows() {
        for l in 0..q {
            if y[(i, l)] == 1.0 {
                code |= 1 << (i * q + l);
            }
        }
    }
    code
}

/// Step-up BH computed straight from the definition
/// `q_(i) = min_{j >= i} m p_(j) / j`, quadratic time.
pub fn brute_force_bh(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut sorted: Vec<(f64, usize)> = p.iter().cloned().zip(0..).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut q = vec![0.0; m];
    for i in 0..m {
        let mut best = f64::INFINITY;
        for (j, &(pj, _)) in sorted.iter().enumerate().skip(i) {
            best = best.min(m as f64 * pj / (j + 1) as f64);
        }
        q[sorted[i].1] = best.min(1.0);
    }
    q
}

pub fn note(pitch: u8, onset: f64, duration: f64, beat: f64) -> NoteEvent {
    NoteEvent {
        movement_id: "m".into(),
        note_id: 0,
        onset_qn: onset,
        duration_qn: duration,
        midi_pitch: pitch,
        measure: 1,
        beat,
        dynamic_level: 4.0,
        expressive_marks: 0,
    }
}

/// Consecutive notes from pitches and durations, starting at onset 0.
pub fn melody(pitches: &[u8], durations: &[f64]) -> Vec<NoteEvent> {
    let mut onset = 0.0;
    pitches
        .iter()
        .zip(durations)
        .enumerate()
        .map(|(k, (&p, &d))| {
            let mut n = note(p, onset, d, 1.0 + onset % 4.0);
            n.note_id = k as i64;
            onset += d;
            n
        })
        .collect()
}

/// Minimum alignment cost by enumerating every monotone alignment.
pub fn exhaustive_alignment_cost(
    a: &[NoteEvent],
    b: &[NoteEvent],
    match_cost: &dyn Fn(&NoteEvent, &NoteEvent) -> f64,
    gap: f64,
) -> f64 {
    fn go(
        a: &[NoteEvent],
        b: &[NoteEvent],
        i: usize,
        j: usize,
        acc: f64,
        match_cost: &dyn Fn(&NoteEvent, &NoteEvent) -> f64,
        gap: f64,
        best: &mut f64,
    ) {
        if i == a.len() && j == b.len() {
            *best = best.min(acc);
            return;
        }
        if i < a.len() && j < b.len() {
            go(
                a,
                b,
                i + 1,
                j + 1,
                acc + match_cost(&a[i], &b[j]),
                match_cost,
                gap,
                best,
            );
        }
        if j < b.len() {
            go(a, b, i, j + 1, acc + gap, match_cost, gap, best);
        }
        if i < a.len() {
            go(a, b, i + 1, j, acc + gap, match_cost, gap, best);
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, 0, 0, 0.0, match_cost, gap, &mut best);
    best
}

pub fn dense(adjacency: &Adjacency) -> DMatrix<f64> {
    adjacency.to_dense()
}

pub fn toy_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy")
}

/// File name to contents for every file directly under `dir`.
pub fn snapshot(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}
