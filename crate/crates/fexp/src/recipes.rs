//! The toy experiment configurations shipped under `recipes/`.
//!
//! The text is compiled in so that library users and tests run exactly what
//! the command line runs from the files.

use crate::config::{Config, ConfigError};
use crate::settings::RunConfig;

pub const GLOBAL: &str = include_str!("../../../recipes/global.conf");
pub const LOCAL: &str = include_str!("../../../recipes/local.conf");

/// Parses a recipe with `seed` and any `key = value` overrides applied.
pub fn load(text: &str, seed: u64, overrides: &[(&str, &str)]) -> Result<RunConfig, ConfigError> {
    let mut cfg = Config::parse(text)?;
    cfg.set("seed", seed);
    for (key, value) in overrides {
        cfg.set(key, value);
    }
    RunConfig::from_config(&cfg)
}

pub fn global(seed: u64) -> RunConfig {
    load(GLOBAL, seed, &[]).expect("the bundled global recipe parses")
}

pub fn local(seed: u64) -> RunConfig {
    load(LOCAL, seed, &[]).expect("the bundled local recipe parses")
}
