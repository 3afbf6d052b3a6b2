//! Library side of the `wigner` binary: configuration, the verification
//! checks and the subcommands, exposed so the acceptance tests can drive them
//! directly.

pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod oracle_cmd;
pub mod output;
pub mod train;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::CliError;
