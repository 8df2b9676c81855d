use thiserror::Error;

/// Domain errors shared across the crate. These map to exit code 1 in the CLI;
/// usage errors are handled by the argument parser and map to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension-too-large: d={d} exceeds limit {max} for {what}")]
    DimensionTooLarge { d: usize, max: usize, what: &'static str },

    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    #[error("unsupported-distribution: {0}")]
    UnsupportedDistribution(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("not-found: {0}")]
    NotFound(String),

    #[error("zero-mass region: {0}")]
    ZeroMass(String),

    #[error("measure-zero degeneracy: {0}")]
    Degenerate(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable machine-readable error kind, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::DimensionTooLarge { .. } => "dimension-too-large",
            Error::OutsideDomain(_) => "outside-domain",
            Error::UnsupportedDistribution(_) => "unsupported-distribution",
            Error::Unsupported(_) => "unsupported",
            Error::Infeasible(_) => "infeasible",
            Error::NotFound(_) => "not-found",
            Error::ZeroMass(_) => "zero-mass",
            Error::Degenerate(_) => "degenerate",
            Error::Budget(_) => "budget",
            Error::InvalidModel(_) => "invalid-model",
            Error::InvalidInput(_) => "invalid-input",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
