use thiserror::Error;

pub type Result<T> = std::result::Result<T, LocusError>;

#[derive(Debug, Error)]
pub enum LocusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("column '{0}' has zero variance")]
    ConstantColumn(String),

    #[error("split '{0}' is empty after allocation")]
    EmptySplit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular design matrix: rank {rank} < {required}")]
    SingularDesign { rank: usize, required: usize },

    #[error("too few points: need {required}, have {available}")]
    TooFewPoints { required: usize, available: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("cdf inversion failed: engine cdf never reaches level {level} after {doublings} doublings")]
    BracketFailed { level: f64, doublings: usize },

    #[error("unsupported artifact schema version {found} (expected {expected})")]
    SchemaVersion { found: String, expected: u64 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LocusError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LocusError::InvalidParameter(msg.into())
    }

    /// Whether the error stems from bad input or configuration rather than a
    /// failure during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            LocusError::Cell { .. }
                | LocusError::UnknownColumn(_)
                | LocusError::ColumnMismatch(_)
                | LocusError::InvalidParameter(_)
                | LocusError::SchemaVersion { .. }
                | LocusError::Json(_)
                | LocusError::Csv(_)
        )
    }
}
