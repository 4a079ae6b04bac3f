//! Library surface of the curlvar driver: config parsing, the five command
//! pipelines, and report emission. The binary in `main.rs` is a thin
//! argument-parsing wrapper; integration tests drive these modules directly.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
