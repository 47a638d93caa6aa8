//! File formats, parallel drivers, and the `vvc` command-line workflow on top
//! of `vvc-core`.

pub mod cli;
pub mod designfile;
pub mod error;
pub mod feeder;
pub mod manifest;
pub mod modelfile;
pub mod parallel;
pub mod report;
pub mod scenarios;
pub mod tracefile;

pub use cli::run;
pub use error::{CliError, Result};
