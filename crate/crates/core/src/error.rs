use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A perspective projection hit a point at or behind the camera plane.
    #[error("degenerate depth at point {index}: v_z = {v_z}")]
    DegenerateDepth { index: usize, v_z: f64 },

    /// The pseudo-perspective denominator `1 + rho * v_z` fell below the guard.
    #[error("shrinkage singularity at point {index}: v_z = {v_z}, rho = {rho}")]
    ShrinkageSingularity { index: usize, v_z: f64, rho: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by the numeric domain of a projection.
    pub fn is_numeric_domain(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDepth { .. } | Error::ShrinkageSingularity { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("line {} column {}: {}", e.line(), e.column(), e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
