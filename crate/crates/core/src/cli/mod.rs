//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 convergence warning
//! (outputs are still written), 4 numerical failure. `ZINB_THREADS` caps the
//! worker threads used for chains and replicates.

pub mod commands;
pub mod config;
pub mod io;

use std::ffi::OsString;

use crate::error::Error;

pub use config::{RunConfig, Source, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("unknown setting {0}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}")]
    InvalidValue { key: String, value: String },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{path}:{line}:{column}: count {value:?} is not a non-negative integer")]
    NonIntegerCount { path: String, line: usize, column: usize, value: String },
    #[error("{0}")]
    UnalignedSampleIds(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::UnknownKey(_) | Self::InvalidValue { .. } => EXIT_USAGE,
            Self::Model(Error::NumericalFailure { .. }) => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ConvergenceWarning,
}

fn init_threads() {
    if let Some(n) = std::env::var("ZINB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // a second call in the same process is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Parse `args` (including the program name), run the subcommand and return
/// the process exit code. Errors go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_threads();
    let matches = match config::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cmd = Subcommand::ALL.into_iter().find(|c| c.name() == name).expect("registered subcommand");
    let result = RunConfig::from_matches(cmd, sub).and_then(|cfg| match cmd {
        Subcommand::Fit => commands::fit_command(&cfg),
        Subcommand::Simulate => commands::simulate_command(&cfg),
        Subcommand::Evaluate => commands::evaluate_command(&cfg),
        Subcommand::SimStudy => commands::sim_study_command(&cfg),
    });
    match result {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::ConvergenceWarning) => {
            eprintln!("warning: chains did not reach the concordance floor; see convergence.csv");
            EXIT_CONVERGENCE
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
