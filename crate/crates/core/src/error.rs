use thiserror::Error;

/// Errors raised by the modelling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e}); increase jitter")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("missing label at row {row}")]
    MissingLabel { row: usize },
    #[error("invalid label {value} at row {row}; expected 0 or 1")]
    InvalidLabel { row: usize, value: String },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("feature `{0}` has no observed values")]
    AllMissingFeature(String),
    #[error("minority class has {count} rows; smote needs more than k = {k}")]
    TooFewMinority { count: usize, k: usize },
    #[error("standardization statistics have not been fitted")]
    NotFitted,
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("model is not trained: {0}")]
    NotTrained(String),
    #[error("empty training subsample")]
    EmptySubsample,
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("expected count is zero for category {0}")]
    ZeroExpected(usize),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("only one class present in labels")]
    SingleClass,
    #[error("class {class} has {count} rows, fewer than k = {k} folds")]
    TooFewPerClass { class: u8, count: usize, k: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
