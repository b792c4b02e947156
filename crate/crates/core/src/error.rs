use std::io;

use thiserror::Error;

/// Errors raised by the engine. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum NuqError {
    #[error("input error: {0}")]
    Input(String),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl NuqError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        NuqError::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        NuqError::Config(msg.into())
    }

    pub(crate) fn parse(offset: u64, msg: impl Into<String>) -> Self {
        NuqError::Parse {
            offset,
            message: msg.into(),
        }
    }

    /// Process exit code: 2 input/parse, 3 numerical, 4 config.
    pub fn exit_code(&self) -> i32 {
        match self {
            NuqError::Input(_) | NuqError::Parse { .. } | NuqError::Io(_) => 2,
            NuqError::Numerical(_) => 3,
            NuqError::Config(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, NuqError>;
