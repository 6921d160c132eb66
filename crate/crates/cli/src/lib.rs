//! Pipeline orchestration behind the `pcrseg` command-line tool.

pub mod commands;
pub mod config;

use std::fmt;

pub use commands::{run, Command};
pub use config::{load, PipelineConfig, RawConfig};

/// Exit status plus a one-line message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    /// `error: usage: ...` or `error: runtime: ...`, newlines flattened.
    pub fn line(&self) -> String {
        let kind = if self.code == 2 { "usage" } else { "runtime" };
        format!("error: {kind}: {}", self.message.replace(['\n', '\r'], " "))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<pcrseg::Error> for CliError {
    fn from(e: pcrseg::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}
