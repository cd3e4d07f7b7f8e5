//! Command-line front end for `loadlab-core`: configuration files, run
//! manifests and the subcommands behind the `loadlab` binary.

pub mod commands;
pub mod config;
pub mod manifest;
