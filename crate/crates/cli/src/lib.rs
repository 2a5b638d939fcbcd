//! Scenario runner for the `fbm-mkv` command-line tool.
//!
//! [`scenarios`] holds the computations, [`commands`] turns them into CSV
//! files under an output directory.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;
pub mod scenarios;

use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] fbm_mkv::Error),
}
