//! Batch front-end for the renormalization engine: config parsing, the
//! subcommands behind the `renorm-lab` binary, and their JSON/CSV outputs.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_cascade, cmd_fixedpoint, cmd_geometry, cmd_universal, cmd_verify, VerifyReport,
};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
