//! Line-oriented `key=value` config files. Blank lines and `#` comments are
//! ignored; keys use underscores (`reference_scan`, `spec_from`).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::UsageError;

pub const KEYS: &[&str] = &[
    "out",
    "seed",
    "input",
    "synthetic",
    "clusters",
    "target",
    "beta",
    "reference_scan",
    "steps",
    "spec_from",
    "variant",
    "views",
    "size",
    "levels",
    "objects",
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("config line {}: expected key=value", i + 1)))?;
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(UsageError(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::parse(&text)?)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag value if given, else the config value, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, UsageError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, UsageError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| UsageError(format!("config key `{key}`: {e}"))),
        }
    }

    /// Switches: set by the flag, or by a true config value.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, UsageError> {
        if flag {
            return Ok(true);
        }
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(UsageError(format!("config key `{key}`: `{v}` is not a boolean"))),
        }
    }
}
