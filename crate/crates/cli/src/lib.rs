//! Configuration and experiment protocols behind the `hexpert` binary.

pub mod config;
pub mod runner;
