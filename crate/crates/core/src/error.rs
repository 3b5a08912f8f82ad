use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("cardinality error: sensitive column `{column}` has {levels} observed levels, expected 2")]
    Cardinality { column: String, levels: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("rank deficient design: column `{column}` is collinear with earlier columns")]
    Rank { column: String },

    #[error("training diverged (non-finite loss at epoch {epoch}); try a smaller step size")]
    Divergence { epoch: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("normalization error: criterion column {0} is all zeros")]
    Normalization(usize),

    #[error("unsupported model format: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::Cardinality { .. } => "cardinality",
            Error::Domain(_) => "domain",
            Error::Dimension { .. } => "dimension",
            Error::Rank { .. } => "rank",
            Error::Divergence { .. } => "divergence",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Normalization(_) => "normalization",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
