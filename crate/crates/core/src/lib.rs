// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

//! Conditional random field analysis of motif transformations in annotated
//! scores: corpus ingestion, segmentation, labelling, features, graph
//! construction, pseudo-likelihood fitting, inference, simulation and the
//! artifact pipeline that connects them.

pub mod align_label;
pub mod crf;
pub mod error;
pub mod features;
pub mod graph;
pub mod inference;
pub mod pipeline;
pub mod score_model;
pub mod segmentation;
pub mod simulate;

pub use error::{Error, Result};
pub use pipeline::{run_stage, RunConfig, Stage};
