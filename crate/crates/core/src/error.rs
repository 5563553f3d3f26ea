use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid service: {0}")]
    InvalidService(String),

    #[error("distribution weights must be nonnegative and sum to 1 (got sum {sum})")]
    Distribution { sum: f64 },

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: String,
        got: String,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unknown agent {0}")]
    UnknownAgent(String),

    #[error("training did not converge: {0}")]
    NotConverged(String),

    #[error("checkpoint version mismatch: expected `{expected}`, found `{found}`")]
    VersionMismatch { expected: String, found: String },

    #[error("checkpoint truncated: {0}")]
    Truncated(String),

    #[error("checkpoint missing: {}", .0.display())]
    MissingCheckpoint(PathBuf),

    #[error("invalid plan: {0}")]
    Plan(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(what: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code used by the CLI: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Scenario(_)
            | Error::Distribution { .. }
            | Error::InvalidService(_)
            | Error::Plan(_) => 2,
            _ => 3,
        }
    }
}
