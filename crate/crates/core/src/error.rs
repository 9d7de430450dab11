use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv parse error at row {row}: {message}")]
    Parse { row: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("feature signature mismatch; offending columns: {columns:?}")]
    Signature { columns: Vec<String> },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("non-finite loss at epoch {epoch} (learning rate {lr:e})")]
    NonFiniteLoss { epoch: usize, lr: f64 },

    #[error("column not found: {0}")]
    ColumnNotFound(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let row = err.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse {
            row,
            message: err.to_string(),
        }
    }
}
