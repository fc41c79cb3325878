//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The Newton system stayed singular after ridge-of-last-resort damping.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// A moment matrix required to be invertible (or definite) is not.
    #[error("singular moment matrix: {0}")]
    SingularMoment(String),

    /// A penalty weight matrix is degenerate on the penalized coordinates.
    #[error("invalid weighting: {0}")]
    InvalidWeighting(String),

    /// A cross-validation training fold lost an outcome category.
    #[error("degenerate fold: {0}")]
    DegenerateFold(String),

    /// A simulation design is internally inconsistent.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Input data could not be read or fails validation.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
