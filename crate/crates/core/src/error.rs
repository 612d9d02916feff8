use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input document (JSON/CSV structure, headers, flags).
    #[error("parse error: {0}")]
    Parse(String),
    /// Schema is structurally invalid (unknown tables, bad key layout, ...).
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    /// A cell does not parse under its declared column kind.
    #[error("type error: {0}")]
    Type(String),
    /// Key constraints violated (duplicate or missing primary keys).
    #[error("integrity error: {0}")]
    Integrity(String),
    /// A source column does not live in the table a path ends at.
    #[error("source mismatch: {0}")]
    SourceMismatch(String),
    /// Inconsistent or inadmissible run configuration.
    #[error("config error: {0}")]
    Config(String),
    /// A plan was executed against data it was not compiled for.
    #[error("plan mismatch: {0}")]
    PlanMismatch(String),
    /// Train/test split is inconsistent with the instance.
    #[error("split error: {0}")]
    Split(String),
    #[error("empty training set")]
    EmptyTrain,
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    /// A bug: an internal invariant failed.
    #[error("internal invariant failure: {0}")]
    Internal(String),
}
