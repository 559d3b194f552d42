//! Library surface of the experiment runner, exposed so integration tests
//! and the acceptance suite drive the exact code the binary runs.

pub mod config;
pub mod runner;

pub use config::Config;
pub use runner::{run, RunError, RunOutput, SUBCOMMANDS};
