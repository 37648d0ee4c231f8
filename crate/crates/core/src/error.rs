use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum CdganError {
    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("contrastive batch degenerate: no sample has a positive")]
    DegenerateContrastive,

    #[error("non-finite {term} at step {step}: {value}")]
    NonFinite {
        term: &'static str,
        step: usize,
        value: f64,
    },

    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("{path}:{line}: {msg}")]
    Config {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CdganError> = std::result::Result<T, E>;

impl CdganError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        CdganError::Contract(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        CdganError::Validation(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CdganError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
