use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("rank-deficient far-field fit")]
    RankDeficient,

    #[error("trap index {index} out of range ({count} traps)")]
    TrapIndexOutOfRange { index: usize, count: usize },

    #[error("empty element list")]
    EmptyElements,

    #[error("integration blow-up on {body}: step of {step_um:.3} µm exceeds {limit_um:.3} µm")]
    IntegrationBlowup {
        body: String,
        step_um: f64,
        limit_um: f64,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported schema version {0}")]
    UnsupportedVersion(u32),

    #[error("config hash mismatch: log {log}, scenario {scenario}")]
    HashMismatch { log: String, scenario: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed log: {0}")]
    MalformedLog(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

impl Error {
    pub fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
