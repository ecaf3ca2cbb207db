use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid field `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transversal spectrum is incomplete: {0}")]
    IncompleteSpectrum(String),

    #[error("no admissible exponent matches gamma = {gamma} for this channel")]
    InadmissibleExponent { gamma: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("eigensolver did not converge at index {index} after {iterations} iterations")]
    NoConvergence { index: usize, iterations: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Field { field: field.into(), message: message.into() }
    }

    /// True for errors caused by configuration or input data rather than by
    /// the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Field { .. }
                | Error::InvalidArgument(_)
                | Error::IncompleteSpectrum(_)
                | Error::InadmissibleExponent { .. }
                | Error::Io(_)
        )
    }
}
