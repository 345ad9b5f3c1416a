mod common;

use std::path::Path;

use motif_crf::pipeline::artifacts::{read_json, read_table, require, Provenance};
use motif_crf::pipeline::{self, FitArtifact, TruthArtifact};
use motif_crf::{run_stage, Error, RunConfig, Stage};
use sha2::{Digest, Sha256};

fn toy_config() -> RunConfig {
    let mut c = RunConfig::load(common::toy_dir().join("run.cfg")).unwrap();
    c.b = 19;
    c
}

fn run_all(config: &RunConfig) -> tempfile::TempDir {
    let out = tempfile::tempdir().unwrap();
    run_stage(Stage::All, config, &common::toy_dir(), out.path()).unwrap();
    out
}

#[test]
fn all_equals_composition_of_stages() {
    let config = toy_config();
    let combined = run_all(&config);
    let staged = tempfile::tempdir().unwrap();
    run_stage(Stage::Ingest, &config, &common::toy_dir(), staged.path()).unwrap();
    for stage in &Stage::SEQUENCE[1..] {
        run_stage(*stage, &config, staged.path(), staged.path()).unwrap();
    }
    assert_eq!(
        common::snapshot(combined.path()),
        common::snapshot(staged.path())
    );
}

fn sha256_hex(path: &Path) -> String {
    Sha256::digest(std::fs::read(path).unwrap())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[test]
fn every_artifact_carries_config_and_input_hashes() {
    let config = toy_config();
    let out = run_all(&config);
    let echo = config.echo();
    for (name, bytes) in common::snapshot(out.path()) {
        let text = String::from_utf8(bytes).unwrap();
        let (config_lines, inputs): (Vec<String>, Vec<(String, String)>) =
            if name.ends_with(".json") {
                let f = require("test", out.path(), &name).unwrap();
                let (p, _): (Provenance, serde_json::Value) = read_json(&f).unwrap();
                (
                    p.config,
                    p.inputs.into_iter().map(|d| (d.name, d.sha256)).collect(),
                )
            } else {
                let config_lines = text
                    .lines()
                    .filter_map(|l| l.strip_prefix("# config "))
                    .map(str::to_string)
                    .collect();
                let inputs = text
                    .lines()
                    .filter_map(|l| l.strip_prefix("# input "))
                    .map(|l| {
                        let (n, h) = l.split_once(" sha256=").unwrap();
                        (n.to_string(), h.to_string())
                    })
                    .collect();
                (config_lines, inputs)
            };
        assert_eq!(config_lines, echo, "{name}");
        assert!(!inputs.is_empty(), "{name} records no inputs");
        for (input, hash) in inputs {
            let dir = if name.starts_with("corpus_") || name == "diagnostics_ingest.csv" {
                common::toy_dir()
            } else {
                out.path().to_path_buf()
            };
            assert_eq!(hash, sha256_hex(&dir.join(&input)), "{name} <- {input}");
        }
    }
}

#[test]
fn stage_before_its_inputs_is_missing_artifact() {
    let empty = tempfile::tempdir().unwrap();
    for stage in [
        Stage::Segment,
        Stage::Fit,
        Stage::Infer,
        Stage::ClrTest,
        Stage::Report,
    ] {
        let err = run_stage(stage, &toy_config(), empty.path(), empty.path()).unwrap_err();
        assert!(
            matches!(err, Error::MissingArtifact { .. }),
            "{stage}: {err}"
        );
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn report_with_nothing_significant_keeps_headers() {
    let mut config = toy_config();
    let out = run_all(&config);
    config.fdr_level = 1e-300;
    run_stage(Stage::Report, &config, out.path(), out.path()).unwrap();
    for name in [pipeline::REPORT_UNARY, pipeline::REPORT_PAIRWISE] {
        let t = read_table(&require("t", out.path(), name).unwrap()).unwrap();
        assert_eq!(t.header[0], "label");
        assert!(t.rows.is_empty(), "{name}");
    }
    let text = std::fs::read_to_string(out.path().join(pipeline::REPORT_TEXT)).unwrap();
    assert!(text.contains("(no rows)"));
}

#[test]
fn report_filters_at_the_fdr_level() {
    let config = toy_config();
    let out = run_all(&config);
    let effects = read_table(&require("t", out.path(), pipeline::EFFECTS_UNARY).unwrap()).unwrap();
    let expected = effects
        .rows
        .iter()
        .filter(|r| r[7].parse::<f64>().unwrap() < config.fdr_level)
        .count();
    let report = read_table(&require("t", out.path(), pipeline::REPORT_UNARY).unwrap()).unwrap();
    assert_eq!(report.rows.len(), expected);
    let prevalence =
        read_table(&require("t", out.path(), pipeline::REPORT_PREVALENCE).unwrap()).unwrap();
    assert_eq!(prevalence.rows.len(), 8);
    for row in &prevalence.rows {
        let (count, n): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert_eq!(row[3], format!("{:.3}", count / n));
    }
}

#[test]
fn period_filter_selects_movements() {
    let mut config = toy_config();
    config.period = Some("early".into());
    let out = tempfile::tempdir().unwrap();
    run_stage(Stage::Ingest, &config, &common::toy_dir(), out.path()).unwrap();
    let notes = read_table(&require("t", out.path(), pipeline::CORPUS_NOTES).unwrap()).unwrap();
    let mut movements: Vec<&str> = notes.rows.iter().map(|r| r[0].as_str()).collect();
    movements.dedup();
    assert_eq!(movements, ["m01", "m02"]);

    config.period = Some("late".into());
    let err = run_stage(Stage::Ingest, &config, &common::toy_dir(), out.path()).unwrap_err();
    assert_eq!(err.kind(), "EmptyData");
}

#[test]
fn infer_rejects_a_stale_fit() {
    let config = toy_config();
    let out = run_all(&config);
    let mut changed = config.clone();
    changed.sigma = 2.0;
    run_stage(Stage::Graph, &changed, out.path(), out.path()).unwrap();
    let err = run_stage(Stage::Infer, &config, out.path(), out.path()).unwrap_err();
    assert_eq!(err.kind(), "InvalidArtifact", "{err}");
}

#[test]
fn fitted_interactions_satisfy_constraints() {
    let out = run_all(&toy_config());
    let f = require("t", out.path(), pipeline::FIT).unwrap();
    let (_, fit): (Provenance, FitArtifact) = read_json(&f).unwrap();
    let q = fit.label_names.len();
    for a in 0..q {
        assert!(fit.beta[a].iter().sum::<f64>().abs() < 1e-10);
        for b in 0..q {
            assert!((fit.beta[a][b] - fit.beta[b][a]).abs() < 1e-10);
        }
    }
    assert!(fit.converged);
}

#[test]
fn simulated_data_flows_through_fit_infer_and_clrtest() {
    let mut config = RunConfig::default();
    config.sim_segments = 60;
    config.sim_instances = 6;
    config.b = 9;
    config.seed = 11;
    let out = tempfile::tempdir().unwrap();
    let empty = tempfile::tempdir().unwrap();
    run_stage(Stage::Simulate, &config, empty.path(), out.path()).unwrap();
    for stage in [Stage::Fit, Stage::Infer, Stage::ClrTest] {
        run_stage(stage, &config, out.path(), out.path()).unwrap();
    }
    let (_, truth): (Provenance, TruthArtifact) =
        read_json(&require("t", out.path(), pipeline::TRUTH).unwrap()).unwrap();
    let (_, fit): (Provenance, FitArtifact) =
        read_json(&require("t", out.path(), pipeline::FIT).unwrap()).unwrap();
    assert_eq!(fit.n_instances, 360);
    assert_eq!(fit.n_segments, 60);
    assert_eq!(truth.alpha.len(), fit.alpha.len());
    let segments = read_table(&require("t", out.path(), pipeline::SEGMENTS).unwrap()).unwrap();
    assert_eq!(segments.rows.len(), 60);
    let clr = read_table(&require("t", out.path(), pipeline::CLR).unwrap()).unwrap();
    for row in &clr.rows {
        let p: f64 = row[6].parse().unwrap();
        assert!((0.1..=1.0).contains(&p), "{p}");
    }
}

#[test]
fn same_seed_simulations_are_identical() {
    let config = RunConfig {
        sim_segments: 30,
        ..RunConfig::default()
    };
    let empty = tempfile::tempdir().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_stage(Stage::Simulate, &config, empty.path(), a.path()).unwrap();
    run_stage(Stage::Simulate, &config, empty.path(), b.path()).unwrap();
    assert_eq!(common::snapshot(a.path()), common::snapshot(b.path()));
}
