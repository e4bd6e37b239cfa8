//! Strict `key = value` configuration files.
//!
//! Lines are `key = value`, blank, or `#` comments. Consumers declare the
//! keys they understand; anything else is an error, as is reading a key
//! that was never consumed elsewhere (typo protection in both directions).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    BadLine { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}` as {wanted}")]
    BadValue {
        key: String,
        value: String,
        wanted: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

/// A parsed `key = value` file. Keys are tracked as they are consumed so
/// that leftovers can be reported as unknown.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    consumed: std::cell::RefCell<Vec<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::BadLine {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(ConfigError::DuplicateKey { line: i + 1, key });
            }
        }
        Ok(Self {
            entries,
            consumed: std::cell::RefCell::new(Vec::new()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Raw string lookup; marks the key consumed.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().push(key.to_string());
        self.entries.get(key).map(|s| s.as_str())
    }

    /// Typed lookup with a default for missing keys.
    pub fn get_parsed<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.to_string(),
                wanted: std::any::type_name::<T>(),
            }),
        }
    }

    /// Comma-separated list lookup.
    pub fn get_list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    /// After all consumers have pulled their keys, any remaining key is an
    /// error.
    pub fn reject_unknown(&self) -> Result<(), ConfigError> {
        let consumed = self.consumed.borrow();
        for key in self.entries.keys() {
            if !consumed.iter().any(|c| c == key) {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_pairs() {
        let kv = KeyValues::parse("# header\n\na = 1\n b = two words \n").unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(kv.get("b"), Some("two words"));
        kv.reject_unknown().unwrap();
    }

    #[test]
    fn unknown_keys_are_errors() {
        let kv = KeyValues::parse("a = 1\nmystery = 2\n").unwrap();
        let _ = kv.get("a");
        assert!(matches!(kv.reject_unknown(), Err(ConfigError::UnknownKey(k)) if k == "mystery"));
    }

    #[test]
    fn rejects_malformed_and_duplicate_lines() {
        assert!(KeyValues::parse("just some text\n").is_err());
        assert!(KeyValues::parse("a = 1\na = 2\n").is_err());
        assert!(KeyValues::parse("= 1\n").is_err());
    }

    #[test]
    fn typed_lookup_with_defaults() {
        let kv = KeyValues::parse("n = 13\nx = 2.5\n").unwrap();
        assert_eq!(kv.get_parsed("n", 0usize).unwrap(), 13);
        assert_eq!(kv.get_parsed("x", 0.0f64).unwrap(), 2.5);
        assert_eq!(kv.get_parsed("missing", 7usize).unwrap(), 7);
        let bad = KeyValues::parse("n = abc\n").unwrap();
        assert!(bad.get_parsed("n", 0usize).is_err());
    }
}
