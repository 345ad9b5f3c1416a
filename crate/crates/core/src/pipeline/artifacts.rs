//! On-disk stage artifacts. Every CSV starts with `#` provenance lines and
//! every JSON document carries a `provenance` object; both hold the run
//! configuration echo and the SHA-256 of each input file.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    /// File name relative to the stage's input directory.
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub tool: String,
    pub config: Vec<String>,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(stage: &str, config: Vec<String>, inputs: &[&InputFile]) -> Self {
        Provenance {
            stage: stage.to_string(),
            tool: concat!("motif-crf ", env!("CARGO_PKG_VERSION")).to_string(),
            config,
            inputs: inputs.iter().map(|f| f.digest()).collect(),
        }
    }

    fn comment_lines(&self) -> String {
        let mut s = format!("# stage={}\n# tool={}\n", self.stage, self.tool);
        for line in &self.config {
            s.push_str(&format!("# config {line}\n"));
        }
        for d in &self.inputs {
            s.push_str(&format!("# input {} sha256={}\n", d.name, d.sha256));
        }
        s
    }
}

/// An input file read fully into memory.
#[derive(Debug, Clone)]
pub struct InputFile {
    pub name: String,
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

impl InputFile {
    pub fn digest(&self) -> InputDigest {
        InputDigest {
            name: self.name.clone(),
            sha256: hex::encode(Sha256::digest(&self.bytes)),
        }
    }

    pub fn display(&self) -> String {
        self.path.display().to_string()
    }

    pub fn invalid(&self, message: impl Into<String>) -> Error {
        Error::InvalidArtifact {
            path: self.path.clone(),
            message: message.into(),
        }
    }
}

/// Reads `dir/name`, failing with `MissingArtifact` if it does not exist.
pub fn require(stage: &str, dir: &Path, name: &str) -> Result<InputFile> {
    optional(dir, name)?.ok_or_else(|| Error::MissingArtifact {
        stage: stage.to_string(),
        path: dir.join(name),
    })
}

pub fn optional(dir: &Path, name: &str) -> Result<Option<InputFile>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Ok(None);
    }
    let bytes = std::fs::read(&path)?;
    Ok(Some(InputFile {
        name: name.to_string(),
        path,
        bytes,
    }))
}

/// Writes provenance comments followed by `header` and `rows`.
pub fn write_csv<I>(path: &Path, provenance: &Provenance, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_with_provenance(path, provenance, &body)
}

/// Prefixes an already-rendered CSV body with provenance comments.
pub fn write_with_provenance(path: &Path, provenance: &Provenance, body: &[u8]) -> Result<()> {
    let mut out = provenance.comment_lines().into_bytes();
    out.extend_from_slice(body);
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Document<T> {
    provenance: Provenance,
    data: T,
}

pub fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, data: &T) -> Result<()> {
    let doc = Document {
        provenance: provenance.clone(),
        data,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(file: &InputFile) -> Result<(Provenance, T)> {
    let doc: Document<T> =
        serde_json::from_slice(&file.bytes).map_err(|e| file.invalid(e.to_string()))?;
    Ok((doc.provenance, doc.data))
}

/// Header and records of a provenance-prefixed CSV.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, file: &InputFile, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| file.invalid(format!("missing column `{name}`")))
    }
}

pub fn read_table(file: &InputFile) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file.bytes.as_slice());
    let header = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record?.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

pub fn parse_field<T: std::str::FromStr>(file: &InputFile, row: usize, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| file.invalid(format!("data row {}: cannot parse `{value}`", row + 1)))
}
