//! Experiment harness for the SQG simulator: configuration, snapshots,
//! versioned CSV tables and the subcommands behind the `sqg` binary.

pub mod commands;
pub mod config;
pub mod snapshot;
pub mod tables;
