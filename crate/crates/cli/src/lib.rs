//! Batch front end for semi-modular inference: simulate datasets, run eta
//! sweeps and the biased-data simulation study from a TOML configuration,
//! and emit CSV tables plus SVG plots.

pub mod commands;
pub mod config;
pub mod study;
pub mod svg;

/// Command failures carrying the process exit code of the run contract:
/// 1 for validation problems, 2 for runtime failures (all-rows-failed exits
/// with 3, signalled separately by [`commands::cmd_sweep`]).
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
