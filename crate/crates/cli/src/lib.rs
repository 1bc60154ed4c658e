//! Configuration and command drivers behind the `liescale` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Command, Outcome};
pub use config::Config;
pub use error::CliError;
