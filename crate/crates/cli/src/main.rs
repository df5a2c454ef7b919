//! `cachelearn`: command-line front end for cache-policy analysis.
//!
//! Exit codes: 0 success, 2 usage, 3 instance beyond exact caps,
//! 4 numerical non-convergence, 1 anything else.

mod args;
mod commands;
mod manifest;
mod runconfig;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Failure of one CLI run, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Exact analysis refused; carries a Monte Carlo command to try instead.
    #[error("{source}\nhint: estimate by simulation instead:\n  {suggestion}")]
    TooLarge {
        source: cachelearn::Error,
        suggestion: String,
    },
    #[error(transparent)]
    Core(#[from] cachelearn::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use cachelearn::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::TooLarge { .. } => 3,
            CliError::Core(E::InvalidParameter(_) | E::InvalidInput(_) | E::Parse { .. }) => 2,
            CliError::Core(E::TooLarge { .. }) => 3,
            CliError::Core(E::NoConvergence { .. }) => 4,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match commands::dispatch(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
