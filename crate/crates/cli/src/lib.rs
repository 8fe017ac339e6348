//! Std companion of `wordsway-core`: remote model backends, the persistent
//! sample cache, run manifests, CSV reports, template sweeps and replay.

pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod files;
pub mod manifest;
pub mod remote;
pub mod report;
pub mod runner;
pub mod sweep;

pub use error::{AppError, ExitCode};
