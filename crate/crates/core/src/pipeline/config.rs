//! Flat `key=value` run configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::align_label::{AlignConfig, LabelConfig};
use crate::crf::{FitConfig, LbfgsConfig, Penalty};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::graph::GraphConfig;
use crate::inference::{ClrConfig, InferenceOptions, ScoreClusters};
use crate::segmentation::SegmentationConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sigma: f64,
    pub prune_threshold: f64,
    pub normalize_graph: bool,
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
    /// Permutation replicates per CLR comparison.
    pub b: usize,
    pub seed: u64,
    pub min_span_measures: f64,
    pub leap_threshold: i32,
    pub silence_min_qn: f64,
    pub fdr_level: f64,
    /// Keep only movements with this manifest period.
    pub period: Option<String>,
    pub level: f64,
    pub t_reference: bool,
    pub clusters: ScoreClusters,
    pub warm_start: bool,
    pub gtol: f64,
    pub max_iterations: usize,
    pub accentuation_sd: bool,
    pub sim_segments: usize,
    pub sim_instances: usize,
    pub sim_labels: usize,
    pub sim_features: usize,
    /// Bound on the absolute value of every simulated true parameter.
    pub sim_effect: f64,
    pub sim_burn_in: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sigma: 1.0,
            prune_threshold: 1e-5,
            normalize_graph: true,
            lambda_alpha: 1e-3,
            lambda_beta: 1e-3,
            b: 1000,
            seed: 1,
            min_span_measures: 8.0,
            leap_threshold: 5,
            silence_min_qn: 1.0,
            fdr_level: 0.05,
            period: None,
            level: 0.95,
            t_reference: false,
            clusters: ScoreClusters::Segment,
            warm_start: false,
            gtol: 1e-6,
            max_iterations: 500,
            accentuation_sd: false,
            sim_segments: 100,
            sim_instances: 8,
            sim_labels: 3,
            sim_features: 3,
            sim_effect: 0.5,
            sim_burn_in: 200,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    /// Parses `key=value` lines; `#` starts a comment and unknown keys are
    /// rejected. Keys not given keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sigma" => self.sigma = parse(key, value)?,
            "prune_threshold" => self.prune_threshold = parse(key, value)?,
            "normalize_graph" => self.normalize_graph = parse(key, value)?,
            "lambda_alpha" => self.lambda_alpha = parse(key, value)?,
            "lambda_beta" => self.lambda_beta = parse(key, value)?,
            "B" => self.b = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "min_span_measures" => self.min_span_measures = parse(key, value)?,
            "leap_threshold" => self.leap_threshold = parse(key, value)?,
            "silence_min_qn" => self.silence_min_qn = parse(key, value)?,
            "fdr_level" => self.fdr_level = parse(key, value)?,
            "period" => self.period = (!value.is_empty()).then(|| value.to_string()),
            "level" => self.level = parse(key, value)?,
            "t_reference" => self.t_reference = parse(key, value)?,
            "clusters" => {
                self.clusters = match value {
                    "segment" => ScoreClusters::Segment,
                    "instance" => ScoreClusters::Instance,
                    _ => {
                        return Err(Error::Config(format!(
                            "invalid value `{value}` for `clusters`"
                        )))
                    }
                }
            }
            "warm_start" => self.warm_start = parse(key, value)?,
            "gtol" => self.gtol = parse(key, value)?,
            "max_iterations" => self.max_iterations = parse(key, value)?,
            "accentuation_sd" => self.accentuation_sd = parse(key, value)?,
            "sim_segments" => self.sim_segments = parse(key, value)?,
            "sim_instances" => self.sim_instances = parse(key, value)?,
            "sim_labels" => self.sim_labels = parse(key, value)?,
            "sim_features" => self.sim_features = parse(key, value)?,
            "sim_effect" => self.sim_effect = parse(key, value)?,
            "sim_burn_in" => self.sim_burn_in = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(what.to_string()))
            }
        };
        check(
            self.sigma > 0.0 && self.sigma.is_finite(),
            "sigma must be positive",
        )?;
        check(
            (0.0..1.0).contains(&self.prune_threshold),
            "prune_threshold must lie in [0, 1)",
        )?;
        check(
            self.lambda_alpha >= 0.0 && self.lambda_beta >= 0.0,
            "penalties must be non-negative",
        )?;
        check(self.b >= 1, "B must be at least 1")?;
        check(
            self.min_span_measures > 0.0,
            "min_span_measures must be positive",
        )?;
        check(
            self.leap_threshold >= 1,
            "leap_threshold must be at least 1",
        )?;
        check(self.silence_min_qn > 0.0, "silence_min_qn must be positive")?;
        check(
            self.fdr_level > 0.0 && self.fdr_level < 1.0,
            "fdr_level must lie in (0, 1)",
        )?;
        check(
            self.level > 0.0 && self.level < 1.0,
            "level must lie in (0, 1)",
        )?;
        check(self.gtol > 0.0, "gtol must be positive")?;
        check(
            self.max_iterations >= 1,
            "max_iterations must be at least 1",
        )?;
        check(self.sim_instances >= 1, "sim_instances must be at least 1")?;
        check(self.sim_labels >= 1, "sim_labels must be at least 1")?;
        check(self.sim_effect >= 0.0, "sim_effect must be non-negative")?;
        Ok(())
    }

    /// Canonical `key=value` lines in a fixed order; parsing the echo
    /// reproduces the configuration.
    pub fn echo(&self) -> Vec<String> {
        let clusters = match self.clusters {
            ScoreClusters::Segment => "segment",
            ScoreClusters::Instance => "instance",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("sigma", self.sigma.to_string()),
            ("prune_threshold", self.prune_threshold.to_string()),
            ("normalize_graph", self.normalize_graph.to_string()),
            ("lambda_alpha", self.lambda_alpha.to_string()),
            ("lambda_beta", self.lambda_beta.to_string()),
            ("B", self.b.to_string()),
            ("seed", self.seed.to_string()),
            ("min_span_measures", self.min_span_measures.to_string()),
            ("leap_threshold", self.leap_threshold.to_string()),
            ("silence_min_qn", self.silence_min_qn.to_string()),
            ("fdr_level", self.fdr_level.to_string()),
            ("period", self.period.clone().unwrap_or_default()),
            ("level", self.level.to_string()),
            ("t_reference", self.t_reference.to_string()),
            ("clusters", clusters.to_string()),
            ("warm_start", self.warm_start.to_string()),
            ("gtol", self.gtol.to_string()),
            ("max_iterations", self.max_iterations.to_string()),
            ("accentuation_sd", self.accentuation_sd.to_string()),
            ("sim_segments", self.sim_segments.to_string()),
            ("sim_instances", self.sim_instances.to_string()),
            ("sim_labels", self.sim_labels.to_string()),
            ("sim_features", self.sim_features.to_string()),
            ("sim_effect", self.sim_effect.to_string()),
            ("sim_burn_in", self.sim_burn_in.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k}={v}")).collect()
    }

    pub fn echo_text(&self) -> String {
        let mut s = String::new();
        for line in self.echo() {
            let _ = writeln!(s, "{line}");
        }
        s
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            silence_min_qn: self.silence_min_qn,
            min_span_measures: self.min_span_measures,
            ..Default::default()
        }
    }

    pub fn align(&self) -> AlignConfig {
        AlignConfig::default()
    }

    pub fn labels(&self) -> LabelConfig {
        LabelConfig {
            leap_threshold: self.leap_threshold,
            ..Default::default()
        }
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            accentuation_sd: self.accentuation_sd,
            ..Default::default()
        }
    }

    pub fn graph(&self) -> GraphConfig {
        GraphConfig {
            sigma: self.sigma,
            prune_threshold: self.prune_threshold,
            normalize: self.normalize_graph,
        }
    }

    pub fn fit(&self) -> FitConfig {
        FitConfig {
            penalty: Penalty {
                lambda_alpha: self.lambda_alpha,
                lambda_beta: self.lambda_beta,
            },
            lbfgs: LbfgsConfig {
                gtol: self.gtol,
                max_iterations: self.max_iterations,
                ..Default::default()
            },
        }
    }

    pub fn inference(&self) -> InferenceOptions {
        InferenceOptions {
            level: self.level,
            t_reference: self.t_reference,
            clusters: self.clusters,
            ..Default::default()
        }
    }

    pub fn clr(&self) -> ClrConfig {
        ClrConfig {
            replicates: self.b,
            seed: self.seed,
            warm_start: self.warm_start,
            fit: self.fit(),
        }
    }
}
