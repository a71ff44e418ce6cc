use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column `{0}` missing from csv header")]
    MissingColumn(String),
    #[error("row {row}: label `{value}` is not 0 or 1")]
    NonBinaryLabel { row: usize, value: String },
    #[error("feature `{feature}`: unknown level `{value}`")]
    UnknownLevel { feature: String, value: String },
    #[error("feature `{feature}`: missing numeric value at row {row}")]
    MissingNumeric { feature: String, row: usize },
    #[error("feature `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("a class has no samples")]
    EmptyClass,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model was trained against a different schema (expected hash {expected}, found {found})")]
    SchemaMismatch { expected: String, found: String },

    #[error("query is not predicted positive")]
    QueryNotPositive,
    #[error("reference `{0}` is predicted positive")]
    ReferencePositive(String),
    #[error("no alignment of at most {k_max} features flips the prediction")]
    Unexplainable { k_max: usize },
    #[error("no negative samples available")]
    EmptyNegatives,
    #[error("no explanation records to summarize")]
    EmptyRecords,
    #[error("reference set has no active (negative-predicted) centroid")]
    NoActiveCentroid,
    #[error("need more than {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("even the reference has log-likelihood {reference:.4} below threshold {threshold:.4}")]
    ThresholdUnreachable { reference: f64, threshold: f64 },
    #[error("tree has no negative leaf")]
    NoNegativeLeaf,
    #[error("leaf {0} has contradictory path conditions")]
    InfeasibleConditions(usize),
    #[error("tree pool is empty")]
    EmptyPool,
    #[error("no positive queries")]
    NoPositiveQueries,
    #[error("loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("run directory `{0}` has no summary")]
    MissingRun(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Schema(_) | InvalidArgument(_) | SchemaMismatch { .. } => ErrorClass::Config,
            Io(_)
            | Csv(_)
            | Json(_)
            | Format(_)
            | MissingColumn(_)
            | NonBinaryLabel { .. }
            | UnknownLevel { .. }
            | MissingNumeric { .. }
            | ZeroVariance(_)
            | EmptyClass
            | SingleClassData
            | EmptyNegatives
            | TooFewSamples { .. }
            | MissingRun(_) => ErrorClass::Data,
            _ => ErrorClass::Runtime,
        }
    }
}
