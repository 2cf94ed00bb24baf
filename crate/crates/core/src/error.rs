use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch for `{field}`: expected {expected}, got {got}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("need at least {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },

    #[error("non-finite value in `{field}` at row {row}")]
    NonFinite { field: &'static str, row: usize },

    #[error("treatment indicator at row {row} is {value}, expected 0 or 1")]
    NonBinaryTreatment { row: usize, value: f64 },

    #[error("degenerate treatment: {0}")]
    DegenerateTreatment(String),

    #[error("outcome declared binary but row {row} has y = {value}")]
    NonBinaryOutcome { row: usize, value: f64 },

    #[error("the Frechet-Hoeffding bound requires an outcome declared binary")]
    NotBinaryOutcome,

    #[error("IRLS failed after {iterations} iterations: {reason}")]
    IrlsDiverged { iterations: usize, reason: String },

    #[error("arm {arm} has {have} units, need at least {need}")]
    InsufficientArmData { arm: u8, have: usize, need: usize },

    #[error("normal equations are not positive definite (collinear design with zero ridge?)")]
    Singular,

    #[error("cannot cross-fit with {folds} folds: {reason}")]
    FoldTooSmall { folds: usize, reason: String },

    #[error("oracle nuisance `{0}` requested but not supplied")]
    MissingOracle(&'static str),

    #[error("treated-arm outcome predictions (mu1) are required but unavailable")]
    MissingMu1,

    #[error("conditional standard deviations (sigma0, sigma1) are required but unavailable")]
    MissingSigma,

    #[error("invalid nuisance value `{field}` at row {row}: {value}")]
    InvalidNuisance {
        field: &'static str,
        row: usize,
        value: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
}

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Input violated a data or configuration invariant.
    Validation,
    /// A numerical routine failed on otherwise valid input.
    Numeric,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::IrlsDiverged { .. } | Error::Singular => ErrorCategory::Numeric,
            _ => ErrorCategory::Validation,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::TooFewRows { .. } => "TooFewRows",
            Error::NonFinite { .. } => "NonFinite",
            Error::NonBinaryTreatment { .. } => "NonBinaryTreatment",
            Error::DegenerateTreatment(_) => "DegenerateTreatment",
            Error::NonBinaryOutcome { .. } => "NonBinaryOutcome",
            Error::NotBinaryOutcome => "NotBinaryOutcome",
            Error::IrlsDiverged { .. } => "IrlsDiverged",
            Error::InsufficientArmData { .. } => "InsufficientArmData",
            Error::Singular => "Singular",
            Error::FoldTooSmall { .. } => "FoldTooSmall",
            Error::MissingOracle(_) => "MissingOracle",
            Error::MissingMu1 => "MissingMu1",
            Error::MissingSigma => "MissingSigma",
            Error::InvalidNuisance { .. } => "InvalidNuisance",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InvalidSpec(_) => "InvalidSpec",
        }
    }
}
