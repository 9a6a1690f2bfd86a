//! Library side of the `masfs` binary: config parsing and experiment
//! execution, kept out of main.rs so integration tests can drive the same
//! code paths directly.

pub mod config;
pub mod experiment;
