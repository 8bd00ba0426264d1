//! Flat `key = value` experiment manifests.
//!
//! One setting per line, `#` starts a comment, keys accept `-` or `_`. List
//! values are comma separated. Keys mirror the CLI flags, and flags given on
//! the command line override the file.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

pub type Settings = BTreeMap<String, String>;

pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

pub fn parse_settings(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}

pub fn load_settings(path: impl AsRef<Path>) -> Result<Settings> {
    parse_settings(&std::fs::read_to_string(path)?)
}

/// Applies `overrides` on top of `base`.
pub fn merge(mut base: Settings, overrides: Settings) -> Settings {
    base.extend(overrides.into_iter().map(|(k, v)| (normalize_key(&k), v)));
    base
}

/// Typed access that records which keys were consumed.
pub struct Reader<'a> {
    settings: &'a Settings,
    used: std::cell::RefCell<Vec<String>>,
}

impl<'a> Reader<'a> {
    pub fn new(settings: &'a Settings) -> Self {
        Self {
            settings,
            used: Default::default(),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&'a str> {
        self.used.borrow_mut().push(key.to_string());
        self.settings.get(key).map(String::as_str)
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Config(format!("invalid entry `{s}` in `{key}`")))
                })
                .collect(),
        }
    }

    /// Fails on keys nobody asked for, so typos are not silently ignored.
    pub fn finish(self) -> Result<()> {
        let used = self.used.into_inner();
        match self.settings.keys().find(|k| !used.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown setting `{k}`"))),
            None => Ok(()),
        }
    }
}
