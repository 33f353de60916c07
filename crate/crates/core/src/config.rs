//! Flat `key = value` configuration files.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored.
//! Keys are case-sensitive and may appear once.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl FlatConfig {
    /// Parses `text`, rejecting keys outside `allowed`.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(Error::Config { line, msg: "empty key".into() });
            }
            if !allowed.contains(&key) {
                return Err(Error::Config { line, msg: format!("unknown key `{key}`") });
            }
            if let Some((first, _)) = entries.get(key) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            entries.insert(key.to_string(), (line, value.to_string()));
        }
        Ok(FlatConfig { entries })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    /// Typed value of `key`, `None` when absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| Error::Config {
                line: *line,
                msg: format!("bad value `{v}` for `{key}`: {e}"),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| Error::Config { line: 0, msg: format!("missing key `{key}`") })
    }

    /// Line on which `key` was set, or 0.
    pub fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(l, _)| *l)
    }
}

/// Parses a hex string into bits, MSB first.
pub fn hex_to_bits(hex: &str) -> std::result::Result<Vec<bool>, String> {
    hex.chars()
        .map(|c| c.to_digit(16).ok_or_else(|| format!("`{c}` is not a hex digit")))
        .map(|d| d.map(|d| (0..4).rev().map(move |b| (d >> b) & 1 == 1)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(|v| v.into_iter().flatten().collect())
}
