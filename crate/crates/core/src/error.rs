use alloc::string::String;
use core::fmt;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    InvalidArgument(String),
    /// A statistic is undefined for the given input (empty subset, single class).
    Undefined(&'static str),
    /// A vector or matrix did not have the expected width.
    DimensionMismatch { expected: usize, found: usize },
    /// A feature component required by the model is not available.
    MissingComponent(String),
    /// A user index outside `0..num_users`.
    UnknownUser(u32),
    /// A training stage failed inside a cross-validation fold.
    Fold { fold: usize, source: alloc::boxed::Box<Error> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Undefined(what) => write!(f, "undefined value: {what}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::MissingComponent(name) => write!(f, "missing component vector: {name}"),
            Error::UnknownUser(id) => write!(f, "unknown user id {id}"),
            Error::Fold { fold, source } => write!(f, "fold {fold}: {source}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
