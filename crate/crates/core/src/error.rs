use thiserror::Error;

/// Errors produced by the workbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("non-finite input at index {0}")]
    NonFinite(usize),

    #[error("degenerate spec: {0}")]
    DegenerateSpec(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing feature: {0}")]
    MissingFeature(&'static str),

    #[error("unfusable operator {0}")]
    Unfusable(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not doubly stochastic (row error {row_err:e}, column error {col_err:e})")]
    NotDoublyStochastic { row_err: f64, col_err: f64 },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("fixture {name}: {reason}")]
    Fixture { name: String, reason: String },

    #[error("fixture checksum mismatch for {name}: expected {expected}, got {actual}")]
    ChecksumMismatch {
        name: String,
        expected: String,
        actual: String,
    },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NoSamples => "no_samples",
            Error::NonFinite(_) => "non_finite",
            Error::DegenerateSpec(_) => "degenerate_spec",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::MissingFeature(_) => "missing_feature",
            Error::Unfusable(_) => "unfusable",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotDoublyStochastic { .. } => "not_doubly_stochastic",
            Error::NotPowerOfTwo(_) => "not_power_of_two",
            Error::Fixture { .. } => "fixture",
            Error::ChecksumMismatch { .. } => "checksum_mismatch",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
