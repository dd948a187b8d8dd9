//! Library surface of the experiment runner, exposed so integration tests
//! can drive the subcommands in-process.

pub mod commands;
pub mod config;
pub mod report;
