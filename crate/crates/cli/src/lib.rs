//! Experiment harness: config parsing, the operator DSL, and report emission.

pub mod config;
pub mod dsl;
pub mod experiments;
pub mod report;
