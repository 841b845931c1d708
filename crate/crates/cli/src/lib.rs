//! Command-line front end for `bjmetro`: configuration, dispatch and
//! deterministic CSV plus manifest emission.

pub mod config;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

pub use config::{parse_config, Invocation, RunConfig};
pub use run::{execute, replay};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] bjmetro::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// A replay produced different bytes.
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) => e.exit_code(),
            CliError::Usage(_) => EXIT_USAGE,
            // Bad inputs that only the library could judge are still usage errors.
            CliError::Numerical(bjmetro::Error::InvalidInput { .. }) => EXIT_USAGE,
            CliError::Numerical(_) | CliError::Io { .. } | CliError::Mismatch(_) => EXIT_NUMERICAL,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_out = std::env::var_os(config::OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let outcome = parse_config(argv, env_out).and_then(|inv| match inv {
        Invocation::Run(cfg) => execute(&cfg).map(|report| report.print()),
        Invocation::Replay(args) => replay(&args).map(|report| report.print()),
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(CliError::Clap(e)) => {
            // Help and version go to stdout with status 0.
            let _ = e.print();
            e.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
