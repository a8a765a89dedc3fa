//! File formats, shipped data sets, and run orchestration on top of
//! `gridstor-core`. The core crate is `no_std` and does the math; this one
//! owns everything that touches text and the filesystem.

pub mod data;
pub mod formats;

/// Error of a text-format parser, carrying the 1-based line number.
#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

impl FormatError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}
