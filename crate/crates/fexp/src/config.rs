//! Flat `key = value` configuration with dotted section prefixes.
//!
//! ```text
//! # comment
//! seed = 3
//! expander.mode = local
//! train.hidden = 128, 128, 128
//! ```
//!
//! Keys are lowercase dotted identifiers; values run to the end of the line
//! (a `#` starts a trailing comment). Every key must be consumed by the
//! reader, so a misspelled key is reported instead of silently ignored.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("line {line}: key `{key}` repeats line {first}")]
    Duplicate { key: String, line: usize, first: usize },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("line {line}: key `{key}`: {detail}")]
    Invalid { key: String, line: usize, detail: String },
    #[error("line {line}: unknown key `{key}`")]
    Unknown { key: String, line: usize },
    #[error("cannot read config {path}: {detail}")]
    Read { path: String, detail: String },
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|part| {
            !part.is_empty()
                && part.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        })
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, detail: format!("expected `key = value`, found `{content}`") });
            };
            let (key, value) = (key.trim(), value.trim());
            if !valid_key(key) {
                return Err(ConfigError::Invalid {
                    key: key.to_string(),
                    line,
                    detail: "keys are lowercase dotted identifiers".into(),
                });
            }
            if value.is_empty() {
                return Err(ConfigError::Invalid { key: key.to_string(), line, detail: "empty value".into() });
            }
            if let Some(prev) = entries.get(key) {
                return Err(ConfigError::Duplicate { key: key.to_string(), line, first: prev.line });
            }
            entries.insert(key.to_string(), Entry { value: value.to_string(), line });
        }
        Ok(Config { entries, used: RefCell::default() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), detail: e.to_string() })?;
        Self::parse(&text)
    }

    /// Sets or replaces a key, e.g. from a command-line override.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        self.entries.insert(key.to_string(), Entry { value: value.to_string(), line });
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        let entry = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(&entry.value)
    }

    pub fn invalid(&self, key: &str, detail: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { key: key.to_string(), line: self.line_of(key), detail: detail.into() }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| self.invalid(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Missing { key: key.to_string() })
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|item| {
                let item = item.trim();
                item.parse().map_err(|e| self.invalid(key, format!("cannot parse list item `{item}`: {e}")))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// Errors on the first key (in line order) no reader asked for.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        let mut unused: Vec<(&String, &Entry)> = self.entries.iter().filter(|(k, _)| !used.contains(*k)).collect();
        unused.sort_by_key(|(_, e)| e.line);
        match unused.first() {
            Some((key, entry)) => Err(ConfigError::Unknown { key: key.to_string(), line: entry.line }),
            None => Ok(()),
        }
    }
}
