use std::path::PathBuf;

use marc_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("cannot parse {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("output directory {} is not empty; pass --force to reuse it", .0.display())]
    OutputExists(PathBuf),
    #[error("unknown ablation preset '{name}', valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },
    #[error("override '{key}' is not allowed here; allowed keys: {allowed}")]
    Override { key: String, allowed: String },
    #[error("malformed override '{0}', expected KEY=VALUE")]
    OverrideSyntax(String),
    #[error("{0}")]
    Csv(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
