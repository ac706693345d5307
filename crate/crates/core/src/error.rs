use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violates its documented domain.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge: estimated error {achieved:.3e} > requested {requested:.3e} ({context})")]
    Quadrature {
        achieved: f64,
        requested: f64,
        context: String,
    },

    /// A time stepper or linear solve produced unusable output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A least-squares fit could not be formed.
    #[error("fit error: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
