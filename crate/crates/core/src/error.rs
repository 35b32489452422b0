use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} = {value} is outside the admissible range [{lo}, {hi}]")]
    OutOfRange {
        what: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{what} = {value} s is not aligned with the sampling grid (period {period} s)")]
    Misaligned { what: String, value: f64, period: f64 },

    #[error("formula window needs sample {needed} but the trace ends at sample {last}")]
    HorizonOverflow { needed: usize, last: usize },

    #[error("objective evaluated to a non-finite value")]
    NumericalFailure,

    #[error("{path}: {message}")]
    Validation { path: String, message: String },

    #[error("malformed scenario document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}
