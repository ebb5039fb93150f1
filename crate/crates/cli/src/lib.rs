//! Config-driven experiment runner for the cylinder eigenvalue solvers.

pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod runner;

pub use config::{Experiment, ExperimentConfig, Plan};
pub use error::CliError;
pub use runner::{run_config, RunManifest};

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "CYLSPECTRA_THREADS";

/// Thread count from the flag, else the environment, else `None`.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return if n == 0 {
            Err(CliError::Config("--threads must be positive".into()))
        } else {
            Ok(Some(n))
        };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "{THREADS_ENV}={v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(None),
    }
}
