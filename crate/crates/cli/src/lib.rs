//! Operator tooling for the exercise service: lesson import, population
//! simulation and gallery export. The `pausepoint` binary wraps these.

pub mod error;
pub mod export;
pub mod import;
pub mod local;
pub mod sim;
pub mod simulate;

pub use error::{CliError, Result};
