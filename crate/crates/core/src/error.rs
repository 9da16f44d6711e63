use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus header has no `{0}` column")]
    MissingColumn(String),
    #[error("line {line}: `{value}` is not a valid {field} label")]
    UnknownLabel {
        field: String,
        value: String,
        line: usize,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    MalformedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: verse id {id} already used")]
    DuplicateVerseId { id: u64, line: usize },
    #[error("poem type `{0}` has no sentiment group")]
    UnmappedTopic(String),
    #[error("stratum `{0}` is empty")]
    EmptyStratum(String),
    #[error("verse {verse_id} has no {field} label")]
    MissingLabel { field: String, verse_id: u64 },
    #[error("first hemistich is empty after normalization")]
    EmptyHemistich,
    #[error("tokenizer training corpus is empty")]
    EmptyCorpus,
    #[error("target vocabulary size {target} cannot hold {required} reserved and alphabet tokens")]
    TargetTooSmall { target: usize, required: usize },
    #[error("token id {id} out of range for vocabulary of {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("every target is ignored; nothing to average")]
    EmptyReduction,
    #[error("attention row {row} has no unmasked key")]
    AllMasked { row: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("vocabulary digest mismatch: checkpoint has {expected}, pipeline has {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("checkpoint format version {found} is not supported (reader understands {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("checkpoint has no classification head for {0}")]
    MissingHead(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("field `{field}` of verse {verse_id} contains a tab or newline")]
    UnwritableField { field: &'static str, verse_id: u64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name, printed by the CLI on the diagnostic stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::UnknownLabel { .. } => "UnknownLabel",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::DuplicateVerseId { .. } => "DuplicateVerseId",
            Error::UnmappedTopic(_) => "UnmappedTopic",
            Error::EmptyStratum(_) => "EmptyStratum",
            Error::MissingLabel { .. } => "MissingLabel",
            Error::EmptyHemistich => "EmptyHemistich",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::TargetTooSmall { .. } => "TargetTooSmall",
            Error::IdOutOfRange { .. } => "IdOutOfRange",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::EmptyReduction => "EmptyReduction",
            Error::AllMasked { .. } => "AllMasked",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::DigestMismatch { .. } => "DigestMismatch",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::CorruptFile(_) => "CorruptFile",
            Error::MissingHead(_) => "MissingHead",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::UnwritableField { .. } => "UnwritableField",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
