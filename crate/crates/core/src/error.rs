use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

/// Errors surfaced by the augmentation engine.
///
/// Every pipeline stage maps its failure modes onto one of these variants so
/// the CLI can name the failing stage and pick an exit code.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("table has no data rows")]
    EmptyTable,

    #[error("no usable feature columns remain")]
    NoFeatures,

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("bad size: {0}")]
    BadSize(String),

    #[error("column not found: {0}")]
    MissingColumn(String),

    #[error("soft join key must be numeric or datetime: {0}")]
    NonNumericSoftKey(String),

    #[error("foreign table has no rows")]
    EmptyForeign,

    #[error("column is not datetime: {0}")]
    NotDatetime(String),

    #[error("column granularity {have} is not finer than target {want}")]
    CoarserThanTarget { have: String, want: String },

    #[error("division by zero: foreign key domain is empty")]
    DivZero,

    #[error("feature width mismatch: model expects {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("selection produced an empty feature set")]
    EmptySelection,

    #[error("join key type mismatch between {base} and {foreign}")]
    KeyTypeMismatch { base: String, foreign: String },

    #[error("invalid key configuration: {0}")]
    InvalidKeyConfig(String),

    #[error("config error: {0}")]
    Config(String),
}

impl CoreError {
    /// True for errors caused by a bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, CoreError::Config(_))
    }
}
