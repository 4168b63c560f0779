use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("all kernel weights vanish at the evaluation point (bandwidth {bandwidth})")]
    DegenerateWindow { bandwidth: f64 },

    #[error("degenerate variance estimate ({value:e})")]
    DegenerateVariance { value: f64 },

    #[error("singular design matrix")]
    SingularDesign,

    #[error("conditional design has {columns} columns but only {n} observations")]
    DesignTooLarge { columns: usize, n: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
