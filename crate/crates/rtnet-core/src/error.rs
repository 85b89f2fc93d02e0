//! Error types shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// A structural problem in a network, task spec, or configuration.
    Config(String),
    /// An API contract violation (shape mismatch, label out of range, ...).
    Usage(String),
    /// A numerical failure (non-finite loss or parameter).
    Numeric(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Config(msg) => write!(f, "configuration error: {msg}"),
            CoreError::Usage(msg) => write!(f, "usage error: {msg}"),
            CoreError::Numeric(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
