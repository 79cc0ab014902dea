//! Command-line front end: configuration, trajectory files and benchmarks.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod trajectory;
