//! Command-line runner for the oracle experiments: config files, bundled
//! fixtures, a worker pool and JSON-lines/CSV output.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod fixtures;
pub mod output;
pub mod runner;
