use std::fmt;

/// Errors raised anywhere in the pipeline.
///
/// Each variant maps onto one CLI exit code (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("numeric error in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("workflow error: {0}")]
    Workflow(String),
    #[error("visibility error: {0}")]
    Visibility(String),
    #[error("internal consistency error: {0}")]
    Consistency(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl fmt::Display) -> Self {
        Error::Dimension {
            op,
            detail: detail.to_string(),
        }
    }

    pub(crate) fn config(detail: impl fmt::Display) -> Self {
        Error::Config(detail.to_string())
    }

    pub(crate) fn format(detail: impl fmt::Display) -> Self {
        Error::Format(detail.to_string())
    }

    /// Process exit code: 3 config, 4 I/O, 5 numeric/invariant. Usage errors
    /// (2) never originate in the library.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Workflow(_) => 3,
            Error::Io(_) | Error::Format(_) => 4,
            Error::Dimension { .. }
            | Error::Numeric { .. }
            | Error::Contract(_)
            | Error::Visibility(_)
            | Error::Consistency(_) => 5,
        }
    }
}
