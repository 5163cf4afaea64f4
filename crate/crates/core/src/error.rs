use std::path::PathBuf;

/// Errors produced by the synthesis back-end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file did not match its declared format.
    #[error("format error in {field}: {detail}")]
    Format { field: String, detail: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The normal-equation matrix of a trajectory solve lost positive definiteness.
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    /// Training produced a non-finite loss.
    #[error("training diverged; last finite epoch was {last_finite_epoch}")]
    TrainingDiverged { last_finite_epoch: usize },

    /// A vocoder activation became non-finite.
    #[error("synthesis failed at frame {frame}: non-finite activation")]
    SynthesisFailed { frame: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
