use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as {expected}")]
    Parse {
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("continuous column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("value {value} out of range for {levels} levels")]
    OutOfRange { value: i64, levels: usize },
    #[error("cannot split: {0}")]
    Split(String),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
    #[error("non-finite {term} at training step {step}")]
    NonFinite { term: String, step: usize },
    #[error("cannot write to `{}`: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
