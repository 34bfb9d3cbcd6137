use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },

    #[error("domain error in `{context}`: {msg}")]
    Domain { context: String, msg: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(
        "window too small: principal eigenvalue shifts by {shift:.3e} under window doubling \
         (tolerance {tol:.1e})"
    )]
    WindowTooSmall { shift: f64, tol: f64 },

    #[error("result flagged invalid: {0}")]
    Flagged(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(context: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Domain {
            context: context.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
