//! Command-line pipeline over an artifact directory.

pub mod config;
pub mod error;
pub mod report;
pub mod stages;
pub mod workspace;
