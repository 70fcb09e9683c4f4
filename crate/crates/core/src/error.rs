use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the modeling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data file not found: {0}")]
    DataNotFound(PathBuf),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unparseable value `{value}` in column `{column}` (row {row})")]
    UnparseableValue {
        column: String,
        row: usize,
        value: String,
    },
    #[error("duplicate key (subject `{subject}`, timestamp {timestamp})")]
    DuplicateKey { subject: String, timestamp: String },
    #[error("label {label} of target `{target}` outside 0..{classes}")]
    TargetOutOfRange {
        target: String,
        label: i64,
        classes: u8,
    },
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("interaction expansion needs at least two subjects, found {0}")]
    FewerThanTwoSubjects(usize),
    #[error("design needs at least one feature")]
    NoFeatures,
    #[error("subject `{0}` has fewer than two observations")]
    SubjectTooShort(String),
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degrees of freedom must be positive (d1 = {0}, d2 = {1})")]
    NonpositiveDegreesOfFreedom(f64, f64),
    #[error("residual degrees of freedom exhausted (N = {n}, rank = {rank})")]
    DegenerateDf { n: usize, rank: usize },
    #[error("only one class present")]
    SingleClass,
    #[error("fold {0} does not contain enough classes")]
    SingleClassFold(usize),
    #[error("class {class} has {count} rows, fewer than {folds} folds")]
    ClassTooRare {
        class: u8,
        count: usize,
        folds: usize,
    },
    #[error("empty data")]
    EmptyData,
    #[error("k = {k} exceeds the {distinct} distinct points")]
    KTooLarge { k: usize, distinct: usize },
    #[error("design columns do not match the fitted model")]
    ColumnMismatch,
    #[error("unparseable timestamp `{0}`")]
    UnparseableTimestamp(String),
    #[error("channel `{0}` missing from minute data")]
    MissingChannel(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
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
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Wraps an error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
