use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion norm {norm:e} is below 1e-12")]
    DegenerateQuaternion { norm: f64 },

    #[error("scale component {index} is not positive ({value})")]
    NonPositiveScale { index: usize, value: f64 },

    #[error("matrix is singular (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("covariance is singular or not positive definite (det = {det:e})")]
    SingularCovariance { det: f64 },

    #[error("box dimension {name} = {value} is below the size floor")]
    DegenerateBox { name: &'static str, value: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("allocation of {requested} bytes exceeds the cap of {cap} bytes")]
    AllocationLimit { requested: u64, cap: u64 },

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("length mismatch: {left} predictions vs {right} targets")]
    LengthMismatch { left: usize, right: usize },

    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateQuaternion { .. } => "DegenerateQuaternion",
            Error::NonPositiveScale { .. } => "NonPositiveScale",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::SingularCovariance { .. } => "SingularCovariance",
            Error::DegenerateBox { .. } => "DegenerateBox",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::AllocationLimit { .. } => "AllocationLimit",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyBatch => "EmptyBatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::Format { .. } => "FormatError",
            Error::Io { .. } => "IoError",
        }
    }

    /// True for errors caused by numerically invalid values rather than bad input files.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateQuaternion { .. }
                | Error::NonPositiveScale { .. }
                | Error::SingularMatrix { .. }
                | Error::SingularCovariance { .. }
                | Error::DegenerateBox { .. }
        )
    }
}
