use thiserror::Error;

/// Errors surfaced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimMismatch { op: &'static str, detail: String },

    /// The oblique projection onto the circle has no real root; the step
    /// size is too large for the projected point.
    #[error("oblique circle projection has no real root (step size too large)")]
    NoProjection,

    /// The quasi-Newton orthogonality projection is moving away from the
    /// manifold; the step size is too large.
    #[error("orthogonality projection diverged (residual {residual:.3e} after {iters} iterations)")]
    ProjectionDiverged { residual: f64, iters: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimMismatch {
            op,
            detail: detail.into(),
        }
    }
}
