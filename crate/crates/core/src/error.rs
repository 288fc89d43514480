use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator is not positive semidefinite: min eigenvalue {min:e}, max eigenvalue {max:e}")]
    NotPsd { min: f64, max: f64 },

    #[error("z = {re}{im:+}i lies within {distance:e} of the spectrum (need at least {required:e})")]
    IllConditioned { re: f64, im: f64, distance: f64, required: f64 },

    #[error("precondition failed: {what} (measured {measured:e}, limit {limit:e})")]
    Precondition { what: &'static str, measured: f64, limit: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
