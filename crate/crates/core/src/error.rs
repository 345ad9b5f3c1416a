use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed row: {message}")]
    MalformedRow {
        path: String,
        line: u64,
        message: String,
    },

    #[error(
        "movement {movement_id}: motif instance {instance_id} references missing note {note_id}"
    )]
    DanglingReference {
        movement_id: String,
        instance_id: i64,
        note_id: i64,
    },

    #[error("movement {movement_id}: duplicate note id {note_id}")]
    DuplicateNoteId { movement_id: String, note_id: i64 },

    #[error("movement {0} has no notes")]
    EmptyMovement(String),

    #[error("cannot align an empty note sequence")]
    EmptySequence,

    #[error("movement {movement_id}: no harmony event covers onset {onset_qn}")]
    HarmonyGap { movement_id: String, onset_qn: f64 },

    #[error("unrecognized local key `{0}`")]
    UnknownKey(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFiniteValue(&'static str),

    #[error("observed Hessian is not invertible (smallest eigenvalue {min_eigenvalue:e})")]
    SingularHessian { min_eigenvalue: f64 },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` requires missing artifact {}", path.display())]
    MissingArtifact { stage: String, path: PathBuf },

    #[error("stage `{stage}` failed on {}: {source}", path.display())]
    Stage {
        stage: String,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid artifact {}: {message}", path.display())]
    InvalidArtifact { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 2 for usage or
    /// missing-input failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingArtifact { .. } | Error::Config(_) => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "MalformedRow",
            Error::DanglingReference { .. } => "DanglingReference",
            Error::DuplicateNoteId { .. } => "DuplicateNoteId",
            Error::EmptyMovement(_) => "EmptyMovement",
            Error::EmptySequence => "EmptySequence",
            Error::HarmonyGap { .. } => "HarmonyGap",
            Error::UnknownKey(_) => "UnknownKey",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::SingularHessian { .. } => "SingularHessian",
            Error::EmptyData(_) => "EmptyData",
            Error::Config(_) => "Config",
            Error::MissingArtifact { .. } => "MissingArtifact",
            Error::Stage { source, .. } => source.kind(),
            Error::InvalidArtifact { .. } => "InvalidArtifact",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
