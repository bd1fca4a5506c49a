use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// Raised when an element has a non-positive Jacobian determinant at
    /// one of its quadrature points.
    #[error("element {element}: non-positive jacobian determinant {det:e}")]
    Geometry { element: usize, det: f64 },

    /// A scatter target is missing from the sparsity pattern. This always
    /// points at a bug in the pattern construction.
    #[error("entry ({row}, {col}) is not in the sparsity pattern")]
    MissingEntry { row: usize, col: usize },

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("safety violation: {0}")]
    Safety(String),

    #[error("no convergence after {iterations} iterations (last residual {last:e})", last = residual_history.last().copied().unwrap_or(f64::NAN))]
    Convergence { iterations: usize, residual_history: Vec<f64> },

    #[error("missing base configuration: {0}")]
    MissingBase(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
