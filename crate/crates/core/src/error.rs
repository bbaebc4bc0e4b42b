use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numeric,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative probability mass {value} at index {index}")]
    NegativeMass { index: usize, value: f64 },
    #[error("distribution sums to {sum}, outside the normalization tolerance")]
    NotNormalized { sum: f64 },
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("at least 2 classes are required, got {0}")]
    TooFewClasses(usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("grid of {requested} points exceeds the resource cap of {cap}")]
    ResourceLimit { requested: u128, cap: u64 },
    #[error("Dirichlet concentration {value} at index {index} must be > 1")]
    InvalidConcentration { index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("score kind {kind} requires a {required}-order model")]
    KindModelMismatch { kind: String, required: String },
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("non-finite nonconformity score")]
    NonFiniteScore,
    #[error("infeasible noise parameters: alpha {alpha} must exceed delta {delta}")]
    InfeasibleNoise { alpha: f64, delta: f64 },
    #[error("predictor calibrated at alpha {actual}, expected adjusted rate {expected}")]
    MiscalibratedRate { expected: f64, actual: f64 },
    #[error("operation supports K = {supported} only, got K = {actual}")]
    UnsupportedDimension { supported: usize, actual: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidArgument(_) => ErrorCategory::Usage,
            Error::ResourceLimit { .. }
            | Error::NonFiniteLoss { .. }
            | Error::NonFiniteScore
            | Error::InfeasibleNoise { .. }
            | Error::MiscalibratedRate { .. } => ErrorCategory::Numeric,
            _ => ErrorCategory::Data,
        }
    }

    /// Short stable identifier, used in machine-parsable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NegativeMass { .. } => "NegativeMass",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::TooFewClasses(_) => "TooFewClasses",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ResourceLimit { .. } => "ResourceLimit",
            Error::InvalidConcentration { .. } => "InvalidConcentration",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::KindModelMismatch { .. } => "KindModelMismatch",
            Error::EmptyCalibration => "EmptyCalibration",
            Error::EmptyTestSet => "EmptyTestSet",
            Error::NonFiniteScore => "NonFiniteScore",
            Error::InfeasibleNoise { .. } => "InfeasibleNoise",
            Error::MiscalibratedRate { .. } => "MiscalibratedRate",
            Error::UnsupportedDimension { .. } => "UnsupportedDimension",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
