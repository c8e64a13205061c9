//! Command-line front end: reads a TOML run configuration, calls the
//! solvers in `adk-core`, and writes CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or
//! parameters, 3 solver failure, 4 verification mismatch.

pub mod config;
pub mod emit;
pub mod error;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
pub use run::{execute, run};
