//! Flat `key=value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: expected key=value, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("missing required key {0:?}")]
    Missing(String),
    #[error("invalid value {value:?} for key {key:?}: {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("unknown key {0:?}")]
    Unknown(String),
}

/// Ordered key/value map. Blank lines and `#` comments are ignored;
/// serialization is sorted by key.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(KvError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1, text: raw.to_string() });
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(KvError::Duplicate { line: i + 1, key });
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| KvError::Invalid {
                key: key.to_string(),
                value: v.clone(),
                reason: e.to_string(),
            }),
        }
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on the first key not in `allowed` (prefix match when the
    /// allowed entry ends with `.`).
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), KvError> {
        for key in self.keys() {
            let ok = allowed
                .iter()
                .any(|a| if a.ends_with('.') { key.starts_with(a) } else { key == *a });
            if !ok {
                return Err(KvError::Unknown(key.to_string()));
            }
        }
        Ok(())
    }

    /// Sub-map of all keys starting with `prefix`, with the prefix removed.
    pub fn section(&self, prefix: &str) -> KvConfig {
        let entries = self
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
            .collect();
        KvConfig { entries }
    }

    pub fn merge_prefixed(&mut self, prefix: &str, other: &KvConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(format!("{prefix}{k}"), v.clone());
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

/// Parses a comma-separated list (`4,5,11`).
pub fn parse_list<T>(key: &str, value: &str) -> Result<Vec<T>, KvError>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|e: T::Err| KvError::Invalid {
                key: key.to_string(),
                value: value.to_string(),
                reason: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_get_and_round_trip() {
        let kv = KvConfig::parse("# comment\nb = 2\n\na=x y\n").unwrap();
        assert_eq!(kv.get_str("a"), Some("x y"));
        assert_eq!(kv.require::<u32>("b").unwrap(), 2);
        assert_eq!(kv.to_text(), "a=x y\nb=2\n");
        assert_eq!(KvConfig::parse(&kv.to_text()).unwrap(), kv);
    }

    #[test]
    fn errors_name_the_key() {
        assert!(matches!(KvConfig::parse("novalue"), Err(KvError::Syntax { line: 1, .. })));
        assert!(matches!(KvConfig::parse("a=1\na=2"), Err(KvError::Duplicate { line: 2, .. })));
        let kv = KvConfig::parse("n=abc").unwrap();
        assert!(matches!(kv.get::<u32>("n"), Err(KvError::Invalid { .. })));
        assert_eq!(kv.require::<u32>("m"), Err(KvError::Missing("m".into())));
        assert_eq!(kv.check_keys(&["x."]), Err(KvError::Unknown("n".into())));
        assert!(kv.check_keys(&["n"]).is_ok());
    }

    #[test]
    fn lists_and_sections() {
        assert_eq!(parse_list::<usize>("s", "4, 5,11").unwrap(), vec![4, 5, 11]);
        let kv = KvConfig::parse("m.a=1\nm.b=2\nx=3").unwrap();
        let sec = kv.section("m.");
        assert_eq!(sec.to_text(), "a=1\nb=2\n");
    }
}
