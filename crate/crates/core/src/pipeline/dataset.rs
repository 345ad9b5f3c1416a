//! Joins the feature, label and graph artifacts into model inputs.

use std::collections::HashMap;

use nalgebra::DMatrix;

use serde::{Deserialize, Serialize};

use super::artifacts::{parse_field, read_json, read_table, InputFile};
use crate::crf::CrfProblem;
use crate::error::Result;
use crate::features::{build_design_matrix, DesignMatrix};
use crate::graph::{Adjacency, SegmentGraph};

/// Leading identifier columns of `labels.csv`; label columns follow.
pub const LABEL_KEY_COLUMNS: [&str; 4] = [
    "movement_id",
    "instance_id",
    "segment_id",
    "anchor_instance_id",
];
/// Leading identifier columns of `features.csv`; feature columns follow.
pub const FEATURE_KEY_COLUMNS: [&str; 2] = ["movement_id", "instance_id"];

/// Contents of `graph.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArtifact {
    pub sigma: f64,
    pub prune_threshold: f64,
    pub normalize: bool,
    pub segments: Vec<GraphSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSegment {
    pub movement_id: String,
    pub segment_id: usize,
    /// Instance ids in onset order; edge endpoints index this list.
    pub instances: Vec<i64>,
    /// Nonzero `(i, j, weight)` with `i < j`.
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `(movement_id, instance_id)` per row, in `labels.csv` order.
    pub instances: Vec<(String, i64)>,
    /// `(movement_id, segment_id)` per block of `adjacency`.
    pub segments: Vec<(String, usize)>,
    pub feature_names: Vec<String>,
    /// Raw feature values, one row per instance.
    pub features: Vec<Vec<f64>>,
    pub label_names: Vec<String>,
    pub y: DMatrix<f64>,
    pub adjacency: Adjacency,
}

fn check_prefix(file: &InputFile, header: &[String], expected: &[&str]) -> Result<()> {
    if header.len() < expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(file.invalid(format!("header must start with {}", expected.join(","))));
    }
    Ok(())
}

impl Dataset {
    pub fn load(features: &InputFile, labels: &InputFile, graph: &InputFile) -> Result<Self> {
        let lt = read_table(labels)?;
        check_prefix(labels, &lt.header, &LABEL_KEY_COLUMNS)?;
        let label_names: Vec<String> = lt.header[LABEL_KEY_COLUMNS.len()..].to_vec();
        if label_names.is_empty() {
            return Err(labels.invalid("no label columns"));
        }
        let n = lt.rows.len();
        let mut instances = Vec::with_capacity(n);
        let mut row_of: HashMap<(String, i64), usize> = HashMap::new();
        let mut y = DMatrix::zeros(n, label_names.len());
        let mut label_segment = Vec::with_capacity(n);
        for (i, row) in lt.rows.iter().enumerate() {
            if row.len() != lt.header.len() {
                return Err(labels.invalid(format!("data row {} has {} fields", i + 1, row.len())));
            }
            let key = (row[0].clone(), parse_field::<i64>(labels, i, &row[1])?);
            if row_of.insert(key.clone(), i).is_some() {
                return Err(labels.invalid(format!("duplicate instance {} {}", key.0, key.1)));
            }
            instances.push(key);
            label_segment.push(parse_field::<usize>(labels, i, &row[2])?);
            for (q, v) in row[LABEL_KEY_COLUMNS.len()..].iter().enumerate() {
                y[(i, q)] = match v.as_str() {
                    "0" => 0.0,
                    "1" => 1.0,
                    other => {
                        return Err(labels.invalid(format!("label value `{other}` is not 0 or 1")))
                    }
                };
            }
        }

        let ft = read_table(features)?;
        check_prefix(features, &ft.header, &FEATURE_KEY_COLUMNS)?;
        let feature_names: Vec<String> = ft.header[FEATURE_KEY_COLUMNS.len()..].to_vec();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
        for (i, row) in ft.rows.iter().enumerate() {
            if row.len() != ft.header.len() {
                return Err(features.invalid(format!(
                    "data row {} has {} fields",
                    i + 1,
                    row.len()
                )));
            }
            let key = (row[0].clone(), parse_field::<i64>(features, i, &row[1])?);
            let Some(&r) = row_of.get(&key) else {
                return Err(features.invalid(format!("instance {} {} has no labels", key.0, key.1)));
            };
            let values = row[FEATURE_KEY_COLUMNS.len()..]
                .iter()
                .map(|v| parse_field::<f64>(features, i, v))
                .collect::<Result<Vec<f64>>>()?;
            rows[r] = Some(values);
        }
        let features_rows = rows
            .into_iter()
            .zip(&instances)
            .map(|(r, key)| {
                r.ok_or_else(|| {
                    features.invalid(format!("instance {} {} has no features", key.0, key.1))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let (_, artifact): (_, GraphArtifact) = read_json(graph)?;
        let mut blocks = Vec::with_capacity(artifact.segments.len());
        let mut segments = Vec::with_capacity(artifact.segments.len());
        for seg in artifact.segments {
            let members = seg
                .instances
                .iter()
                .map(|&id| {
                    let r = *row_of.get(&(seg.movement_id.clone(), id)).ok_or_else(|| {
                        graph.invalid(format!("instance {} {id} has no labels", seg.movement_id))
                    })?;
                    if label_segment[r] != seg.segment_id {
                        return Err(graph.invalid(format!(
                            "instance {} {id} is in segment {} of labels.csv",
                            seg.movement_id, label_segment[r]
                        )));
                    }
                    Ok(r)
                })
                .collect::<Result<Vec<usize>>>()?;
            if seg
                .edges
                .iter()
                .any(|&(_, _, w)| !(w.is_finite() && w >= 0.0))
            {
                return Err(graph.invalid(format!(
                    "invalid weight in segment {} {}",
                    seg.movement_id, seg.segment_id
                )));
            }
            blocks.push(SegmentGraph::from_upper_edges(members, &seg.edges)?);
            segments.push((seg.movement_id, seg.segment_id));
        }
        let adjacency = Adjacency::new(n, blocks)?;
        Ok(Dataset {
            instances,
            segments,
            feature_names,
            features: features_rows,
            label_names,
            y,
            adjacency,
        })
    }

    pub fn design(&self) -> Result<DesignMatrix> {
        build_design_matrix(&self.features, &self.feature_names)
    }

    pub fn problem(&self, design: &DesignMatrix) -> Result<CrfProblem> {
        CrfProblem::new(design.x.clone(), self.y.clone(), &self.adjacency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(name: &str, text: &str) -> InputFile {
        InputFile {
            name: name.into(),
            path: name.into(),
            bytes: text.as_bytes().to_vec(),
        }
    }

    const LABELS: &str =
        "# stage=label\nmovement_id,instance_id,segment_id,anchor_instance_id,a,b\n\
m,1,0,1,1,0\nm,2,0,1,0,1\nm,3,1,3,1,1\nn,1,0,1,0,0\n";
    const FEATURES: &str = "movement_id,instance_id,f\nn,1,4\nm,3,3\nm,2,2\nm,1,1\n";

    fn graph(segments: &str) -> InputFile {
        let text = format!(
            r#"{{"provenance":{{"stage":"graph","tool":"t","config":[],"inputs":[]}},
            "data":{{"sigma":1.0,"prune_threshold":1e-5,"normalize":true,"segments":[{segments}]}}}}"#
        );
        file("graph.json", &text)
    }

    const SEGMENTS: &str = r#"{"movement_id":"m","segment_id":0,"instances":[1,2],"edges":[[0,1,1.0]]},
        {"movement_id":"m","segment_id":1,"instances":[3],"edges":[]},
        {"movement_id":"n","segment_id":0,"instances":[1],"edges":[]}"#;

    #[test]
    fn joins_by_instance_key() {
        let d = Dataset::load(&file("f", FEATURES), &file("l", LABELS), &graph(SEGMENTS)).unwrap();
        assert_eq!(d.instances.len(), 4);
        assert_eq!(d.features, vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        assert_eq!(
            d.segments,
            vec![("m".into(), 0), ("m".into(), 1), ("n".into(), 0)]
        );
        assert_eq!(d.label_names, ["a", "b"]);
        let a = d.adjacency.to_dense();
        assert_eq!((a[(0, 1)], a[(1, 0)], a[(0, 2)]), (1.0, 1.0, 0.0));
        assert_eq!(
            d.y.row(2).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn rejects_inconsistent_inputs() {
        let moved = SEGMENTS.replace(r#""instances":[3]"#, r#""instances":[2]"#);
        assert!(Dataset::load(&file("f", FEATURES), &file("l", LABELS), &graph(&moved)).is_err());
        let uncovered = SEGMENTS
            .replace(
                r#"{"movement_id":"n","segment_id":0,"instances":[1],"edges":[]}"#,
                "",
            )
            .trim_end()
            .trim_end_matches(',')
            .to_string();
        assert!(
            Dataset::load(&file("f", FEATURES), &file("l", LABELS), &graph(&uncovered)).is_err()
        );
        let short = "movement_id,instance_id,f\nm,1,1\n";
        assert!(Dataset::load(&file("f", short), &file("l", LABELS), &graph(SEGMENTS)).is_err());
    }
}
