use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violates a documented precondition.
    InvalidArgument(String),
    /// Two operands have incompatible sizes.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// The operation is not available for this input (e.g. an unstructured mesh).
    Unsupported(String),
    /// A factorization hit a zero or negative pivot.
    SolverFailure(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what, expected, found })
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch { what, expected, found } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, found {found}")
            }
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::SolverFailure(msg) => write!(f, "linear solver failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
