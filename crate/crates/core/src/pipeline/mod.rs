//! Batch stages connected through CSV and JSON artifacts on disk.
//!
//! `ingest` reads the annotation tables from the input directory; every
//! other stage reads the artifacts of earlier stages from its input
//! directory and writes its own into the output directory. `all` runs
//! `ingest` through `report` with the output directory as the input of
//! every later stage.

pub mod artifacts;
pub mod config;
pub mod dataset;
pub mod report;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align_label::{label_corpus, Transformation};
use crate::crf::{fit_problem, BetaBasis, FitResult, ModelSpec, ParamLayout, Termination};
use crate::error::{Error, Result};
use crate::features::{compute_corpus_features, display_name};
use crate::graph::build_adjacency;
use crate::inference::{
    clr_permutation_test, infer, Comparison, EffectRow, EssReport, Reference, ScoreClusters,
};
use crate::score_model::{
    apply_manifest, assemble_corpus, read_harmony, read_manifest, read_motifs, read_notes,
    validate_corpus, write_harmony, write_manifest, write_motifs, write_notes, Corpus, Diagnostic,
};
use crate::segmentation::segment_corpus;
use crate::simulate::{synthesize_corpus, SimConfig, RNG_SCHEME};

use artifacts::{
    optional, parse_field, read_json, read_table, require, write_csv, write_json,
    write_with_provenance, InputFile, Provenance,
};
pub use config::RunConfig;
use dataset::{Dataset, GraphArtifact, GraphSegment, FEATURE_KEY_COLUMNS, LABEL_KEY_COLUMNS};
use report::{
    format_estimate, format_frequency, format_p, label_display, prevalence_report, render_table,
};

pub const CORPUS_NOTES: &str = "corpus_notes.csv";
pub const CORPUS_HARMONY: &str = "corpus_harmony.csv";
pub const CORPUS_MOTIFS: &str = "corpus_motifs.csv";
pub const CORPUS_MANIFEST: &str = "corpus_manifest.csv";
pub const SEGMENTS: &str = "segments.csv";
pub const ASSIGNMENTS: &str = "assignments.csv";
pub const LABELS: &str = "labels.csv";
pub const FEATURES: &str = "features.csv";
pub const GRAPH: &str = "graph.json";
pub const FIT: &str = "fit.json";
pub const EFFECTS_INTERCEPT: &str = "effects_intercept.csv";
pub const EFFECTS_UNARY: &str = "effects_unary.csv";
pub const EFFECTS_PAIRWISE: &str = "effects_pairwise.csv";
pub const INFERENCE: &str = "inference.json";
pub const CLR: &str = "clr.csv";
pub const CLR_REPLICATES: &str = "clr_replicates.csv";
pub const TRUTH: &str = "truth.json";
pub const REPORT_PREVALENCE: &str = "report_prevalence.csv";
pub const REPORT_CLR: &str = "report_clr.csv";
pub const REPORT_UNARY: &str = "report_unary.csv";
pub const REPORT_PAIRWISE: &str = "report_pairwise.csv";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Ingest,
    Segment,
    Label,
    Features,
    Graph,
    Fit,
    Infer,
    ClrTest,
    Simulate,
    Report,
    All,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Ingest,
        Stage::Segment,
        Stage::Label,
        Stage::Features,
        Stage::Graph,
        Stage::Fit,
        Stage::Infer,
        Stage::ClrTest,
        Stage::Simulate,
        Stage::Report,
        Stage::All,
    ];

    /// Stages run by `all`, in order.
    pub const SEQUENCE: [Stage; 9] = [
        Stage::Ingest,
        Stage::Segment,
        Stage::Label,
        Stage::Features,
        Stage::Graph,
        Stage::Fit,
        Stage::Infer,
        Stage::ClrTest,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Segment => "segment",
            Stage::Label => "label",
            Stage::Features => "features",
            Stage::Graph => "graph",
            Stage::Fit => "fit",
            Stage::Infer => "infer",
            Stage::ClrTest => "clrtest",
            Stage::Simulate => "simulate",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }

    /// Artifact named in error records when the stage fails.
    fn primary_artifact(self) -> &'static str {
        match self {
            Stage::Ingest => CORPUS_NOTES,
            Stage::Segment => SEGMENTS,
            Stage::Label => LABELS,
            Stage::Features => FEATURES,
            Stage::Graph => GRAPH,
            Stage::Fit => FIT,
            Stage::Infer => EFFECTS_UNARY,
            Stage::ClrTest => CLR,
            Stage::Simulate => TRUTH,
            Stage::Report | Stage::All => REPORT_TEXT,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Runs one stage and returns the artifacts it wrote, in write order.
pub fn run_stage(
    stage: Stage,
    config: &RunConfig,
    input: &Path,
    output: &Path,
) -> Result<Vec<PathBuf>> {
    config.validate()?;
    if stage == Stage::All {
        let mut written = Vec::new();
        for s in Stage::SEQUENCE {
            let from = if s == Stage::Ingest { input } else { output };
            written.extend(run_stage(s, config, from, output)?);
        }
        return Ok(written);
    }
    std::fs::create_dir_all(output)?;
    let mut ctx = Ctx {
        stage,
        config,
        input,
        output,
        written: Vec::new(),
    };
    let outcome = match stage {
        Stage::Ingest => ingest(&mut ctx),
        Stage::Segment => segment(&mut ctx),
        Stage::Label => label(&mut ctx),
        Stage::Features => features(&mut ctx),
        Stage::Graph => graph(&mut ctx),
        Stage::Fit => fit(&mut ctx),
        Stage::Infer => infer_stage(&mut ctx),
        Stage::ClrTest => clrtest(&mut ctx),
        Stage::Simulate => simulate(&mut ctx),
        Stage::Report => report_stage(&mut ctx),
        Stage::All => unreachable!(),
    };
    match outcome {
        Ok(()) => Ok(ctx.written),
        Err(e @ (Error::MissingArtifact { .. } | Error::Stage { .. } | Error::Config(_))) => Err(e),
        Err(e) => Err(Error::Stage {
            stage: stage.name().to_string(),
            path: output.join(stage.primary_artifact()),
            source: Box::new(e),
        }),
    }
}

struct Ctx<'a> {
    stage: Stage,
    config: &'a RunConfig,
    input: &'a Path,
    output: &'a Path,
    written: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn require(&self, name: &str) -> Result<InputFile> {
        require(self.stage.name(), self.input, name)
    }

    fn provenance(&self, inputs: &[&InputFile]) -> Provenance {
        Provenance::new(self.stage.name(), self.config.echo(), inputs)
    }

    fn csv(
        &mut self,
        name: &str,
        inputs: &[&InputFile],
        header: &[&str],
        rows: Vec<Vec<String>>,
    ) -> Result<()> {
        let path = self.output.join(name);
        let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
        write_csv(&path, &self.provenance(inputs), &header, rows)?;
        self.written.push(path);
        Ok(())
    }

    fn csv_owned(
        &mut self,
        name: &str,
        inputs: &[&InputFile],
        header: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<()> {
        let path = self.output.join(name);
        write_csv(&path, &self.provenance(inputs), &header, rows)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, inputs: &[&InputFile], data: &T) -> Result<()> {
        let path = self.output.join(name);
        write_json(&path, &self.provenance(inputs), data)?;
        self.written.push(path);
        Ok(())
    }

    fn rendered(&mut self, name: &str, inputs: &[&InputFile], body: &[u8]) -> Result<()> {
        let path = self.output.join(name);
        write_with_provenance(&path, &self.provenance(inputs), body)?;
        self.written.push(path);
        Ok(())
    }

    fn diagnostics(&mut self, inputs: &[&InputFile], diagnostics: &[Diagnostic]) -> Result<()> {
        let name = format!("diagnostics_{}.csv", self.stage.name());
        let rows = diagnostics
            .iter()
            .map(|d| vec![d.movement_id.clone(), d.entity.clone(), d.rule.clone()])
            .collect();
        self.csv(&name, inputs, &["movement_id", "entity", "rule"], rows)
    }
}

fn render<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn ingest(ctx: &mut Ctx) -> Result<()> {
    let notes = ctx.require("notes.csv")?;
    let harmony = ctx.require("harmony.csv")?;
    let motifs = ctx.require("motifs.csv")?;
    let manifest = match &ctx.config.period {
        Some(_) => Some(ctx.require("manifest.csv")?),
        None => optional(ctx.input, "manifest.csv")?,
    };
    let mut corpus = assemble_corpus(
        read_notes(notes.bytes.as_slice(), &notes.display())?,
        read_harmony(harmony.bytes.as_slice(), &harmony.display())?,
        read_motifs(motifs.bytes.as_slice(), &motifs.display())?,
    )?;
    if let Some(m) = &manifest {
        apply_manifest(
            &mut corpus,
            &read_manifest(m.bytes.as_slice(), &m.display())?,
        );
    }
    if let Some(period) = &ctx.config.period {
        corpus.filter_period(period);
        if corpus.movements.is_empty() {
            return Err(Error::EmptyData(format!(
                "no movement is tagged with period `{period}`"
            )));
        }
    }
    if corpus.instance_count() == 0 {
        return Err(Error::EmptyData("corpus has no motif instances".into()));
    }
    let mut inputs = vec![&notes, &harmony, &motifs];
    inputs.extend(manifest.as_ref());
    ctx.rendered(CORPUS_NOTES, &inputs, &render(|b| write_notes(&corpus, b))?)?;
    ctx.rendered(
        CORPUS_HARMONY,
        &inputs,
        &render(|b| write_harmony(&corpus, b))?,
    )?;
    ctx.rendered(
        CORPUS_MOTIFS,
        &inputs,
        &render(|b| write_motifs(&corpus, b))?,
    )?;
    ctx.rendered(
        CORPUS_MANIFEST,
        &inputs,
        &render(|b| write_manifest(&corpus, b))?,
    )?;
    ctx.diagnostics(&inputs, &validate_corpus(&corpus))
}

struct CorpusFiles {
    notes: InputFile,
    harmony: InputFile,
    motifs: InputFile,
}

impl CorpusFiles {
    fn load(ctx: &Ctx) -> Result<(Self, Corpus)> {
        let files = CorpusFiles {
            notes: ctx.require(CORPUS_NOTES)?,
            harmony: ctx.require(CORPUS_HARMONY)?,
            motifs: ctx.require(CORPUS_MOTIFS)?,
        };
        let corpus = assemble_corpus(
            read_notes(files.notes.bytes.as_slice(), &files.notes.display())?,
            read_harmony(files.harmony.bytes.as_slice(), &files.harmony.display())?,
            read_motifs(files.motifs.bytes.as_slice(), &files.motifs.display())?,
        )?;
        Ok((files, corpus))
    }

    fn refs(&self) -> Vec<&InputFile> {
        vec![&self.notes, &self.harmony, &self.motifs]
    }
}

const SEGMENT_HEADER: [&str; 6] = [
    "movement_id",
    "segment_id",
    "start_qn",
    "end_qn",
    "boundary_cue",
    "instances",
];
const ASSIGNMENT_HEADER: [&str; 4] = ["movement_id", "instance_id", "motif_class_id", "segment_id"];

fn segment(ctx: &mut Ctx) -> Result<()> {
    let (files, mut corpus) = CorpusFiles::load(ctx)?;
    let segmentations = segment_corpus(&mut corpus, &ctx.config.segmentation())?;
    let mut segment_rows = Vec::new();
    let mut diagnostics = Vec::new();
    for seg in &segmentations {
        for (k, s) in seg.segments.iter().enumerate() {
            let cue = if k == 0 {
                "start".to_string()
            } else {
                format!("{:?}", seg.boundaries[k - 1].cue)
            };
            segment_rows.push(vec![
                s.movement_id.clone(),
                s.segment_id.to_string(),
                s.start_qn.to_string(),
                s.end_qn.to_string(),
                cue,
                s.member_instance_ids.len().to_string(),
            ]);
        }
        diagnostics.extend(seg.diagnostics.iter().cloned());
    }
    let assignment_rows = corpus
        .movements
        .values()
        .flat_map(|m| &m.instances)
        .map(|i| {
            vec![
                i.movement_id.clone(),
                i.instance_id.to_string(),
                i.motif_class_id.to_string(),
                i.segment_id.expect("segmented").to_string(),
            ]
        })
        .collect();
    let inputs = files.refs();
    ctx.csv(SEGMENTS, &inputs, &SEGMENT_HEADER, segment_rows)?;
    ctx.csv(ASSIGNMENTS, &inputs, &ASSIGNMENT_HEADER, assignment_rows)?;
    ctx.diagnostics(&inputs, &diagnostics)
}

/// `(movement_id, instance_id, segment_id)` rows of `assignments.csv`.
fn read_assignments(file: &InputFile) -> Result<Vec<(String, i64, usize)>> {
    let t = read_table(file)?;
    if t.header != ASSIGNMENT_HEADER {
        return Err(file.invalid(format!("expected header {}", ASSIGNMENT_HEADER.join(","))));
    }
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok((
                r[0].clone(),
                parse_field(file, i, &r[1])?,
                parse_field(file, i, &r[3])?,
            ))
        })
        .collect()
}

fn label(ctx: &mut Ctx) -> Result<()> {
    let (files, mut corpus) = CorpusFiles::load(ctx)?;
    let assignments_file = ctx.require(ASSIGNMENTS)?;
    let assignments: HashMap<(String, i64), usize> = read_assignments(&assignments_file)?
        .into_iter()
        .map(|(m, i, s)| ((m, i), s))
        .collect();
    for movement in corpus.movements.values_mut() {
        for inst in &mut movement.instances {
            let key = (inst.movement_id.clone(), inst.instance_id);
            let seg = assignments.get(&key).ok_or_else(|| {
                assignments_file.invalid(format!("instance {} {} has no segment", key.0, key.1))
            })?;
            inst.segment_id = Some(*seg);
        }
    }
    let labelled = label_corpus(&mut corpus, &ctx.config.align(), &ctx.config.labels())?;
    let mut header: Vec<String> = LABEL_KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(Transformation::ALL.iter().map(|t| t.column().to_string()));
    let rows = labelled
        .iter()
        .map(|l| {
            let mut row = vec![
                l.movement_id.clone(),
                l.instance_id.to_string(),
                l.segment_id.to_string(),
                l.anchor_instance_id.to_string(),
            ];
            row.extend(l.labels.0.iter().map(|&b| u8::from(b).to_string()));
            row
        })
        .collect();
    let mut inputs = files.refs();
    inputs.push(&assignments_file);
    ctx.csv_owned(LABELS, &inputs, header, rows)
}

fn features(ctx: &mut Ctx) -> Result<()> {
    let (files, corpus) = CorpusFiles::load(ctx)?;
    let fc = ctx.config.features();
    let computed = compute_corpus_features(&corpus, &fc)?;
    let mut header: Vec<String> = FEATURE_KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(fc.names());
    let rows = computed
        .iter()
        .map(|f| {
            let mut row = vec![f.movement_id.clone(), f.instance_id.to_string()];
            row.extend(f.features.values().iter().map(f64::to_string));
            row
        })
        .collect();
    ctx.csv_owned(FEATURES, &files.refs(), header, rows)
}

fn graph(ctx: &mut Ctx) -> Result<()> {
    let assignments_file = ctx.require(ASSIGNMENTS)?;
    let assignments = read_assignments(&assignments_file)?;
    let mut keys: Vec<(String, usize)> = Vec::new();
    let mut index: HashMap<(String, usize), usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (row, (m, _, s)) in assignments.iter().enumerate() {
        let key = (m.clone(), *s);
        let k = *index.entry(key.clone()).or_insert_with(|| {
            keys.push(key);
            members.push(Vec::new());
            members.len() - 1
        });
        members[k].push(row);
    }
    let gc = ctx.config.graph();
    let adjacency = build_adjacency(assignments.len(), &members, &gc)?;
    let segments = keys
        .into_iter()
        .zip(&adjacency.blocks)
        .map(|((movement_id, segment_id), block)| GraphSegment {
            movement_id,
            segment_id,
            instances: block.members.iter().map(|&r| assignments[r].1).collect(),
            edges: block.upper_edges(),
        })
        .collect();
    let artifact = GraphArtifact {
        sigma: gc.sigma,
        prune_threshold: gc.prune_threshold,
        normalize: gc.normalize,
        segments,
    };
    ctx.json(GRAPH, &[&assignments_file], &artifact)
}

/// Serialized fit of the full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub spec: ModelSpec,
    /// Design columns including the leading intercept.
    pub feature_columns: Vec<String>,
    pub dropped_features: Vec<String>,
    pub feature_means: Vec<f64>,
    pub feature_sds: Vec<f64>,
    pub label_names: Vec<String>,
    pub n_instances: usize,
    pub n_segments: usize,
    /// Rows follow `feature_columns`, columns follow `label_names`.
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub log_pl: f64,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub grad_norm: f64,
    pub trace: Vec<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

struct DatasetFiles {
    features: InputFile,
    labels: InputFile,
    graph: InputFile,
}

impl DatasetFiles {
    fn load(ctx: &Ctx) -> Result<(Self, Dataset)> {
        let files = DatasetFiles {
            features: ctx.require(FEATURES)?,
            labels: ctx.require(LABELS)?,
            graph: ctx.require(GRAPH)?,
        };
        let data = Dataset::load(&files.features, &files.labels, &files.graph)?;
        Ok((files, data))
    }

    fn refs(&self) -> Vec<&InputFile> {
        vec![&self.features, &self.labels, &self.graph]
    }
}

fn fit(ctx: &mut Ctx) -> Result<()> {
    let (files, data) = DatasetFiles::load(ctx)?;
    let design = data.design()?;
    let problem = data.problem(&design)?;
    let result = fit_problem(&problem, ModelSpec::Full, &ctx.config.fit(), None)?;
    let artifact = FitArtifact {
        spec: result.spec,
        feature_columns: design.columns.clone(),
        dropped_features: design.dropped.clone(),
        feature_means: design.means.clone(),
        feature_sds: design.sds.clone(),
        label_names: data.label_names.clone(),
        n_instances: problem.n(),
        n_segments: problem.segments.len(),
        alpha: rows_of(&result.params.alpha),
        beta: rows_of(&result.params.beta),
        theta: result.theta.clone(),
        objective: result.objective,
        log_pl: result.log_pl,
        converged: result.converged,
        termination: result.termination,
        iterations: result.iterations,
        grad_norm: result.grad_norm,
        trace: result.trace.clone(),
    };
    ctx.json(FIT, &files.refs(), &artifact)
}

const EFFECT_HEADER: [&str; 10] = [
    "label", "term", "estimate", "se", "lo", "hi", "p", "q_bh", "ess", "ess_flag",
];

fn effect_rows(rows: &[EffectRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.term.clone(),
                r.estimate.to_string(),
                r.se.to_string(),
                r.lo.to_string(),
                r.hi.to_string(),
                r.p.to_string(),
                r.q_bh.map(|q| q.to_string()).unwrap_or_default(),
                r.ess.to_string(),
                r.ess_flag.as_str().to_string(),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceArtifact {
    pub reference: Reference,
    pub level: f64,
    pub clusters: ScoreClusters,
    pub jitter: f64,
    pub ess: EssReport,
    /// Sandwich covariance of the free coordinates of `fit.json`.
    pub covariance: Vec<Vec<f64>>,
}

fn infer_stage(ctx: &mut Ctx) -> Result<()> {
    let fit_file = ctx.require(FIT)?;
    let (files, data) = DatasetFiles::load(ctx)?;
    let (fit_prov, artifact): (Provenance, FitArtifact) = read_json(&fit_file)?;
    let current: Vec<_> = files.refs().iter().map(|f| f.digest()).collect();
    if fit_prov.inputs != current {
        return Err(
            fit_file.invalid("fitted on different feature, label or graph artifacts; rerun fit")
        );
    }
    let design = data.design()?;
    let problem = data.problem(&design)?;
    let layout = ParamLayout::new(problem.n_features(), problem.q(), artifact.spec);
    if artifact.theta.len() != layout.dim() {
        return Err(fit_file.invalid("parameter vector does not match the data dimensions"));
    }
    let fit = FitResult {
        spec: artifact.spec,
        params: layout.unpack(&artifact.theta),
        theta: artifact.theta.clone(),
        objective: artifact.objective,
        log_pl: artifact.log_pl,
        converged: artifact.converged,
        termination: artifact.termination,
        iterations: artifact.iterations,
        grad_norm: artifact.grad_norm,
        trace: artifact.trace.clone(),
    };
    let report = infer(
        &problem,
        &fit,
        &design.columns,
        &data.label_names,
        &ctx.config.inference(),
    )?;
    let mut inputs = vec![&fit_file];
    inputs.extend(files.refs());
    ctx.csv(
        EFFECTS_INTERCEPT,
        &inputs,
        &EFFECT_HEADER,
        effect_rows(&report.intercepts),
    )?;
    ctx.csv(
        EFFECTS_UNARY,
        &inputs,
        &EFFECT_HEADER,
        effect_rows(&report.unary),
    )?;
    ctx.csv(
        EFFECTS_PAIRWISE,
        &inputs,
        &EFFECT_HEADER,
        effect_rows(&report.pairwise),
    )?;
    let summary = InferenceArtifact {
        reference: report.reference,
        level: report.level,
        clusters: report.clusters,
        jitter: report.jitter,
        ess: report.ess,
        covariance: report.covariance,
    };
    ctx.json(INFERENCE, &inputs, &summary)
}

const CLR_HEADER: [&str; 11] = [
    "comparison",
    "observed_clr",
    "null_log_pl",
    "alternative_log_pl",
    "replicates",
    "exceedances",
    "p_perm",
    "failed_replicates",
    "retried_replicates",
    "negative_replicates",
    "flagged",
];

fn clrtest(ctx: &mut Ctx) -> Result<()> {
    let (files, data) = DatasetFiles::load(ctx)?;
    let design = data.design()?;
    let problem = data.problem(&design)?;
    let cfg = ctx.config.clr();
    let mut rows = Vec::new();
    let mut replicate_rows = Vec::new();
    for c in Comparison::ALL {
        let r = clr_permutation_test(&problem, c, &cfg)?;
        rows.push(vec![
            c.name().to_string(),
            r.observed_clr.to_string(),
            r.null_log_pl.to_string(),
            r.alternative_log_pl.to_string(),
            cfg.replicates.to_string(),
            r.exceedances.to_string(),
            r.p_perm.to_string(),
            r.failed_replicates.len().to_string(),
            r.retried_replicates.len().to_string(),
            r.negative_replicates.len().to_string(),
            r.observed_flagged.to_string(),
        ]);
        for (b, v) in r.permuted_clrs.iter().enumerate() {
            let status = if r.failed_replicates.contains(&b) {
                "failed"
            } else if r.retried_replicates.contains(&b) {
                "retried"
            } else {
                "ok"
            };
            replicate_rows.push(vec![
                c.name().to_string(),
                b.to_string(),
                v.to_string(),
                status.to_string(),
            ]);
        }
    }
    let inputs = files.refs();
    ctx.csv(CLR, &inputs, &CLR_HEADER, rows)?;
    ctx.csv(
        CLR_REPLICATES,
        &inputs,
        &["comparison", "replicate", "clr", "status"],
        replicate_rows,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthArtifact {
    pub feature_columns: Vec<String>,
    pub label_names: Vec<String>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub burn_in: usize,
    pub rng_scheme: String,
}

/// True parameters for `simulate`, uniform on `[-effect, effect]`; the
/// interaction matrix is projected onto the constraint subspace and shrunk
/// back inside the bound. Drawn from a stream disjoint from the sampler's.
pub fn simulation_truth(config: &RunConfig) -> (DMatrix<f64>, DMatrix<f64>) {
    let (p, q, e) = (config.sim_features, config.sim_labels, config.sim_effect);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let mut draw = || {
        if e > 0.0 {
            rng.random_range(-e..=e)
        } else {
            0.0
        }
    };
    let alpha = DMatrix::from_fn(p + 1, q, |_, _| draw());
    let mut raw = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let v = draw();
            raw[(i, j)] = v;
            raw[(j, i)] = v;
        }
    }
    let basis = BetaBasis::new(q);
    let mut beta = basis.reconstruct(&basis.project(&raw));
    let max = beta.amax();
    if max > e {
        beta *= e / max;
    }
    (alpha, beta)
}

fn simulate(ctx: &mut Ctx) -> Result<()> {
    let c = ctx.config;
    let (alpha, beta) = simulation_truth(c);
    let mut sim = SimConfig::new(
        c.sim_segments,
        c.sim_instances,
        c.sim_labels,
        c.sim_features,
        c.seed,
    );
    sim.true_alpha = alpha.clone();
    sim.true_beta = beta.clone();
    sim.burn_in = c.sim_burn_in;
    sim.graph = c.graph();
    let data = synthesize_corpus(&sim)?;
    let feature_names: Vec<String> = (1..=c.sim_features).map(|j| format!("x_{j}")).collect();
    let label_names: Vec<String> = (1..=c.sim_labels).map(|q| format!("label_{q}")).collect();

    let mut header: Vec<String> = FEATURE_KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(feature_names.iter().cloned());
    let rows = (0..data.x.nrows())
        .map(|i| {
            let mut row = vec!["sim".to_string(), i.to_string()];
            row.extend((1..data.x.ncols()).map(|j| data.x[(i, j)].to_string()));
            row
        })
        .collect();
    ctx.csv_owned(FEATURES, &[], header, rows)?;

    let mut header: Vec<String> = LABEL_KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(label_names.iter().cloned());
    let mut rows = Vec::new();
    for (s, block) in data.adjacency.blocks.iter().enumerate() {
        for &i in &block.members {
            let mut row = vec![
                "sim".to_string(),
                i.to_string(),
                s.to_string(),
                block.members[0].to_string(),
            ];
            row.extend(data.y.row(i).iter().map(|&v| (v as u8).to_string()));
            rows.push(row);
        }
    }
    ctx.csv_owned(LABELS, &[], header, rows)?;

    let segment_rows = data
        .adjacency
        .blocks
        .iter()
        .enumerate()
        .map(|(s, block)| {
            let blank = String::new();
            vec![
                "sim".to_string(),
                s.to_string(),
                blank.clone(),
                blank,
                "synthetic".into(),
                block.len().to_string(),
            ]
        })
        .collect();
    ctx.csv(SEGMENTS, &[], &SEGMENT_HEADER, segment_rows)?;

    let gc = ctx.config.graph();
    let artifact = GraphArtifact {
        sigma: gc.sigma,
        prune_threshold: gc.prune_threshold,
        normalize: gc.normalize,
        segments: data
            .adjacency
            .blocks
            .iter()
            .enumerate()
            .map(|(s, block)| GraphSegment {
                movement_id: "sim".into(),
                segment_id: s,
                instances: block.members.iter().map(|&r| r as i64).collect(),
                edges: block.upper_edges(),
            })
            .collect(),
    };
    ctx.json(GRAPH, &[], &artifact)?;

    let mut columns = vec!["intercept".to_string()];
    columns.extend(feature_names);
    let truth = TruthArtifact {
        feature_columns: columns,
        label_names,
        alpha: rows_of(&alpha),
        beta: rows_of(&beta),
        burn_in: sim.burn_in,
        rng_scheme: RNG_SCHEME.to_string(),
    };
    ctx.json(TRUTH, &[], &truth)
}

/// Effect rows read back from an effects CSV.
struct EffectLine {
    label: String,
    term: String,
    estimate: f64,
    lo: f64,
    hi: f64,
    p: f64,
    q_bh: f64,
    ess: String,
    flag: String,
}

fn read_effects(file: &InputFile) -> Result<Vec<EffectLine>> {
    let t = read_table(file)?;
    if t.header != EFFECT_HEADER {
        return Err(file.invalid(format!("expected header {}", EFFECT_HEADER.join(","))));
    }
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(EffectLine {
                label: r[0].clone(),
                term: r[1].clone(),
                estimate: parse_field(file, i, &r[2])?,
                lo: parse_field(file, i, &r[4])?,
                hi: parse_field(file, i, &r[5])?,
                p: parse_field(file, i, &r[6])?,
                q_bh: parse_field(file, i, &r[7])?,
                ess: r[8].clone(),
                flag: r[9].clone(),
            })
        })
        .collect()
}

fn report_stage(ctx: &mut Ctx) -> Result<()> {
    let labels = ctx.require(LABELS)?;
    let unary = ctx.require(EFFECTS_UNARY)?;
    let pairwise = ctx.require(EFFECTS_PAIRWISE)?;
    let clr = ctx.require(CLR)?;
    let inputs = [&labels, &unary, &pairwise, &clr];

    let lt = read_table(&labels)?;
    let label_names: Vec<String> = lt
        .header
        .get(LABEL_KEY_COLUMNS.len()..)
        .unwrap_or_default()
        .to_vec();
    let mut y = DMatrix::zeros(lt.rows.len(), label_names.len());
    for (i, row) in lt.rows.iter().enumerate() {
        for q in 0..label_names.len() {
            y[(i, q)] = parse_field(&labels, i, &row[LABEL_KEY_COLUMNS.len() + q])?;
        }
    }
    let prevalence = prevalence_report(&y, &label_names)?;
    let n = y.nrows();
    let prevalence_rows: Vec<Vec<String>> = prevalence
        .iter()
        .map(|r| {
            vec![
                label_display(&r.label),
                r.count.to_string(),
                r.n.to_string(),
                format_frequency(r.frequency),
            ]
        })
        .collect();

    let ct = read_table(&clr)?;
    if ct.header != CLR_HEADER {
        return Err(clr.invalid(format!("expected header {}", CLR_HEADER.join(","))));
    }
    let clr_rows = ct
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let v: f64 = parse_field(&clr, i, &r[1])?;
            let p: f64 = parse_field(&clr, i, &r[6])?;
            let flag = if r[10] == "true" { "flagged" } else { "" };
            Ok(vec![
                r[0].clone(),
                format!("{v:.2}"),
                format_p(p),
                r[4].clone(),
                flag.to_string(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;

    let fdr = ctx.config.fdr_level;
    let significant = |rows: Vec<EffectLine>, term: &dyn Fn(&str) -> String| -> Vec<Vec<String>> {
        rows.into_iter()
            .filter(|r| r.q_bh < fdr)
            .map(|r| {
                vec![
                    label_display(&r.label),
                    term(&r.term),
                    format_estimate(r.estimate),
                    format_estimate(r.lo),
                    format_estimate(r.hi),
                    format_p(r.p),
                    format_p(r.q_bh),
                    r.ess,
                    r.flag,
                ]
            })
            .collect()
    };
    let unary_rows = significant(read_effects(&unary)?, &display_name);
    let pairwise_rows = significant(read_effects(&pairwise)?, &label_display);

    let prevalence_header = ["label", "count", "n", "frequency"];
    let clr_header = ["comparison", "clr", "p_perm", "replicates", "flag"];
    let effect_header = [
        "label", "term", "estimate", "ci_lo", "ci_hi", "p", "q_bh", "ess", "ess_flag",
    ];
    ctx.csv(
        REPORT_PREVALENCE,
        &inputs,
        &prevalence_header,
        prevalence_rows.clone(),
    )?;
    ctx.csv(REPORT_CLR, &inputs, &clr_header, clr_rows.clone())?;
    ctx.csv(REPORT_UNARY, &inputs, &effect_header, unary_rows.clone())?;
    ctx.csv(
        REPORT_PAIRWISE,
        &inputs,
        &effect_header,
        pairwise_rows.clone(),
    )?;

    let owned = |h: &[&str]| -> Vec<String> { h.iter().map(|s| s.to_string()).collect() };
    let level = format!("q_BH < {fdr}");
    let text = [
        render_table(
            &format!("Prevalence of transformation families (N = {n})"),
            &owned(&prevalence_header),
            &prevalence_rows,
        ),
        render_table(
            "Composite likelihood ratio tests",
            &owned(&clr_header),
            &clr_rows,
        ),
        render_table(
            &format!("Unary effects ({level})"),
            &owned(&effect_header),
            &unary_rows,
        ),
        render_table(
            &format!("Pairwise effects ({level})"),
            &owned(&effect_header),
            &pairwise_rows,
        ),
    ]
    .join("\n");
    ctx.rendered(REPORT_TEXT, &inputs, text.as_bytes())
}
