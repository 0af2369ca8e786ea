use std::fmt;

/// Error type shared across the crate.
#[derive(Debug)]
pub enum Error {
    /// Shape or dimension mismatch; the message names the offending tensor.
    Shape(String),
    /// Malformed input data (dataset lines, embedding files, vocab files).
    Data { line: Option<usize>, msg: String },
    /// Invalid configuration or command-line usage.
    Config(String),
    /// Checkpoint container problems: version, checksum, missing tensors.
    Checkpoint(String),
    /// Numeric failure (NaN/Inf detected where finite values are required).
    Numeric(String),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data { line: None, msg: msg.into() }
    }

    pub fn data_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Data { line: Some(line), msg: msg.into() }
    }

    /// Short machine-readable kind tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Data { .. } => "data",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Numeric(_) => "numeric",
            Error::Io(_) => "io",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Data { line: Some(n), msg } => write!(f, "data error at line {n}: {msg}"),
            Error::Data { line: None, msg } => write!(f, "data error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::data(e.to_string())
    }
}
