use std::path::PathBuf;

/// Errors raised anywhere in the pre-training and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch (expected {expected}, got {got})")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("l1_loss target must not require gradients (detach it first)")]
    TargetRequiresGrad,
    #[error("tokenization: length {len} is not divisible by patch size {patch}")]
    Tokenization { len: usize, patch: usize },
    #[error("record {record}: lead {lead} contains no finite samples")]
    AllNanLead { record: String, lead: usize },
    #[error("no normalization statistics for database {0}")]
    MissingStats(String),
    #[error("database {0} has positive sampling weight but no records")]
    EmptyDatabase(String),
    #[error("mask: {0}")]
    Mask(String),
    #[error("predict: target position {0} is also a context position")]
    TargetCollision(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: u64, loss: f64 },
    #[error("no class has both positive and negative labels")]
    NoScoreableClass,
    #[error("two-stage fine-tuning requires a linear-evaluation artifact")]
    MissingLinearArtifact,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
