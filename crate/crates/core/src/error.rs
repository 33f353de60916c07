use thiserror::Error;

/// Errors raised by the analysis, oracle, simulation and session layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    #[error("key exhausted: needed {needed} bits, {available} available")]
    KeyExhausted { needed: u64, available: u64 },

    /// `line` is 1-based; 0 means the file as a whole.
    #[error("config{}: {msg}", line_tag(*.line))]
    Config { line: usize, msg: String },
}

fn line_tag(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" line {line}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
