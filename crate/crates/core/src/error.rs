use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    InvalidArgument(String),
    /// A point or configuration lies outside the geometric domain of an operation.
    Domain(String),
    /// The supplied subsolution does not satisfy its structural requirements.
    InvalidSubsolution(String),
    /// Sparse factorization hit a (numerically) zero pivot.
    SingularMatrix { pivot: usize, value: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidSubsolution(msg) => write!(f, "invalid subsolution: {msg}"),
            Error::SingularMatrix { pivot, value } => {
                write!(f, "singular matrix: pivot {pivot} has value {value:e}")
            }
        }
    }
}

impl core::error::Error for Error {}

macro_rules! bail_arg {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::InvalidArgument(alloc::format!($($arg)*)))
    };
}

macro_rules! bail_domain {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Domain(alloc::format!($($arg)*)))
    };
}

pub(crate) use bail_arg;
pub(crate) use bail_domain;
