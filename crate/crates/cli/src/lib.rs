//! Command-line front end for `critex`: configuration files, run manifests
//! and the command implementations behind the `critex` binary.

pub mod commands;
pub mod config;
pub mod manifest;
