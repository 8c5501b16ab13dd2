//! Command-line layer for `fexp-core`: configuration files, checkpoints,
//! CSV and SVG output, and the `fexp` subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod parallel;
pub mod plot;
pub mod recipes;
pub mod settings;

pub use error::{AppError, AppResult};
