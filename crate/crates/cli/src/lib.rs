//! Harness library: scenario configs, the check battery, report emission,
//! and the acceptance suite. The binary in `main.rs` is a thin wrapper.

pub mod acceptance;
pub mod checks;
pub mod config;
pub mod report;
