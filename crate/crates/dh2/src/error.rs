//! Library-wide error type.

use thiserror::Error;

/// Errors produced by mesh handling, assembly and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// Mesh construction or import rejected the input.
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A quantity is undefined for the given mesh (e.g. the panel separation
    /// distance of a single-panel mesh).
    #[error("mesh metric undefined: {0}")]
    MetricUndefined(String),

    /// A parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Kernel evaluation at a singular point.
    #[error("kernel evaluated at zero distance")]
    SingularKernel,

    /// Vector/matrix dimensions do not match the operator.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A dense assembly would exceed the configured size limit.
    #[error("dense assembly of {n} x {n} exceeds the limit of {limit} rows; raise the limit explicitly if intended")]
    DenseTooLarge { n: usize, limit: usize },

    /// Two clusters share a center, so no direction can be assigned.
    #[error("cluster centers coincide; no direction can be assigned")]
    CoincidentCenters,

    /// File input/output failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Text parse failure in mesh or table input.
    #[error("parse error: {0}")]
    Parse(String),
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
