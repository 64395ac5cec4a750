//! Scenario configuration, pipeline execution and rendering for the `coverage` binary.

pub mod config;
pub mod render;
pub mod run;
