//! Command implementations behind the `fairpm` binary.
//!
//! Every command takes [`config::Settings`], reads the inputs named there,
//! writes its outputs into the configured output directory and leaves a
//! `<command>.manifest.toml` next to them.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::{Config, Overrides, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: fairpm_core::Error,
    },

    #[error(transparent)]
    Core(#[from] fairpm_core::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::File {
            path: path.to_path_buf(),
            source: e.into(),
        }
    }

    pub fn in_file(path: &Path) -> impl FnOnce(fairpm_core::Error) -> CliError + '_ {
        move |source| CliError::File {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1: user or configuration error, 2: data error, 3: training diverged.
    pub fn exit_code(&self) -> i32 {
        use fairpm_core::Error as E;
        let core = match self {
            CliError::Config(_) => return 1,
            CliError::File { source, .. } => source,
            CliError::Core(e) => e,
        };
        match core {
            E::Config(_) | E::NotApplicable(_) | E::Contract(_) => 1,
            E::Training { .. } => 3,
            E::Parse { .. }
            | E::Schema(_)
            | E::Data(_)
            | E::UndefinedMetric(_)
            | E::Io(_)
            | E::Csv(_)
            | E::Json(_) => 2,
        }
    }
}
