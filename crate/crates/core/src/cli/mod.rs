//! Command-line front end.

use std::path::PathBuf;

use thiserror::Error;

use crate::solver::SolveFailure;

pub mod config;
pub mod run;
pub mod trace;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("unknown problem `{0}` (see `sbundle list-problems`)")]
    UnknownProblem(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("refusing to write an empty trace")]
    EmptyTrace,
    #[error(transparent)]
    Solver(#[from] SolveFailure),
}
