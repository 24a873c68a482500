use thiserror::Error;

/// Errors raised by the numerical toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sample count must be at least 1")]
    NoSamples,

    #[error("configuration has {count} particles in the sector region, above the maximum {max}")]
    SectorOverflow { count: usize, max: usize },

    #[error("point {index} is not a particle of the configuration")]
    NotAParticle { index: usize },

    #[error("linear system is singular even after ridge regularization (dimension {dim})")]
    SingularSystem { dim: usize },

    #[error("iterative solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("zero gradient energy; ratio is undefined")]
    ZeroEnergy,

    #[error("kernel truncation error {error:.3e} exceeds tolerance {tolerance:.3e}")]
    Truncation { error: f64, tolerance: f64 },

    #[error("missing corrector for direction {direction}")]
    MissingCorrector { direction: usize },

    #[error("source term violates the centering constraint: integral = {integral:.3e}")]
    Centering { integral: f64 },

    #[error("cells {0:?} and {1:?} overlap")]
    OverlappingCells(Vec<f64>, Vec<f64>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
