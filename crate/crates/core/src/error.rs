use thiserror::Error;

/// Errors shared by every module of the workbench.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// The caller supplied an input that violates an operation's precondition.
    #[error("rejected input: {0}")]
    Rejected(String),

    /// A document could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A search exceeded a configured size bound.
    #[error("resource bound exceeded: {0}")]
    Resource(String),

    /// A construction ran out of colors, slack or numeric range.
    #[error("budget exhausted: {0}")]
    Budget(String),
}

impl Error {
    pub fn rejected(msg: impl Into<String>) -> Self {
        Error::Rejected(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }

    pub fn budget(msg: impl Into<String>) -> Self {
        Error::Budget(msg.into())
    }

    /// Semantic errors inside a well-formed document carry no position.
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse {
            line: 0,
            column: 0,
            message: msg.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
