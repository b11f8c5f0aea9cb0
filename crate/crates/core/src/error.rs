use thiserror::Error;

/// Errors produced by the library.
///
/// Variants are grouped so that a driver can map them onto exit codes:
/// configuration problems, infeasible geometry, numerical guards, and
/// invariant failures are kept apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible geometry: {0}")]
    Geometry(String),

    #[error("energy {energy} is within {tolerance:e} of an eigenvalue")]
    ResonantEnergy { energy: f64, tolerance: f64 },

    #[error("operator dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("site {0:?} is not covered by the field sample")]
    MissingSite(Vec<i64>),

    #[error("boundary weight {weight:e} exceeds tolerance {tolerance:e}; enlarge the cube")]
    BoundaryWeight { weight: f64, tolerance: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
