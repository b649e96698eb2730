//! Experiment runner for `modsel`: TOML experiment files in, per-run CSV
//! logs and JSON summaries out, plus the acceptance criteria and the
//! structural self-check.

pub mod config;
pub mod criteria;
pub mod report;
pub mod run;
pub mod selfcheck;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{bundled, EnvironmentConfig, ExperimentConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Invalid experiment file; the message names the offending field.
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("summaries serialize to JSON");
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}
