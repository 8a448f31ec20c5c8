//! Command line, configuration files and report formats around `a3d-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use error::{Result, SimError};
