//! `key = value` run configuration files. `#` starts a comment line; values
//! may be wrapped in double quotes.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::Config(format!("line {}: invalid key `{key}`", n + 1)));
            }
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            if entries.insert(key.replace('-', "_"), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("`{key}`: {e}"))))
            .transpose()
    }

    /// Keys not in `known`, so typos surface instead of being ignored.
    pub fn unknown_keys(&self, known: &[&str]) -> Vec<String> {
        self.entries.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_quotes_and_types() {
        let c = Config::parse("# run\nlambda_ans = 0.1\n\nenv=\"function\"\nepochs = 30\nlambda-think=0.2\n").unwrap();
        assert_eq!(c.get::<f64>("lambda_ans").unwrap(), Some(0.1));
        assert_eq!(c.get_str("env"), Some("function"));
        assert_eq!(c.get::<usize>("epochs").unwrap(), Some(30));
        assert_eq!(c.get::<f64>("lambda_think").unwrap(), Some(0.2));
        assert_eq!(c.get::<f64>("missing").unwrap(), None);
        assert_eq!(c.unknown_keys(&["lambda_ans", "env", "epochs"]), vec!["lambda_think".to_string()]);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("just words").is_err());
        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("bad key = 1").is_err());
        assert!(Config::parse("epochs = many").unwrap().get::<usize>("epochs").is_err());
    }
}
