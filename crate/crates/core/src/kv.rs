//! Tab-separated key/value files: one `key<TAB>value` pair per line, `#`
//! comments and blank lines ignored. Used for experiment configs,
//! normalization sidecars and echoed run configurations.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::write_atomic;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("line {line}: expected 'key<TAB>value', got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("duplicate key '{0}'")]
    Duplicate(String),
    #[error("missing key '{0}'")]
    Missing(String),
    #[error("key '{key}': cannot parse {value:?}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Ordered key/value pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvFile {
    entries: Vec<(String, String)>,
}

impl KvFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut kv = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('\t') else {
                return Err(KvError::Syntax { line: i + 1, text: line.to_string() });
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(KvError::Syntax { line: i + 1, text: line.to_string() });
            }
            if kv.get(k).is_some() {
                return Err(KvError::Duplicate(k.to_string()));
            }
            kv.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self, KvError> {
        let text = std::fs::read_to_string(path).map_err(|e| KvError::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), KvError> {
        write_atomic(path, self.render().as_bytes()).map_err(|e| KvError::Io { path: path.display().to_string(), source: e })
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
    }

    /// Sets `key`, replacing an existing value in place.
    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn parse_value<V: FromStr>(&self, key: &str) -> Result<Option<V>, KvError>
    where
        V::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<V>().map_err(|e| KvError::Value { key: key.to_string(), value: v.to_string(), reason: e.to_string() })
            })
            .transpose()
    }

    pub fn parse_or<V: FromStr>(&self, key: &str, default: V) -> Result<V, KvError>
    where
        V::Err: Display,
    {
        Ok(self.parse_value(key)?.unwrap_or(default))
    }

    /// Comma-separated list value.
    pub fn parse_list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>, KvError>
    where
        V::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<V>().map_err(|e| KvError::Value { key: key.to_string(), value: s.to_string(), reason: e.to_string() })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_renders() {
        let kv = KvFile::parse("# comment\nname\tcity A\nfractions\t1, 0.5,0.25\n\n").unwrap();
        assert_eq!(kv.get("name"), Some("city A"));
        assert_eq!(kv.parse_list::<f64>("fractions").unwrap().unwrap(), vec![1.0, 0.5, 0.25]);
        assert_eq!(KvFile::parse(&kv.render()).unwrap(), kv);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(KvFile::parse("novalue"), Err(KvError::Syntax { line: 1, .. })));
        assert!(matches!(KvFile::parse("a\t1\na\t2"), Err(KvError::Duplicate(_))));
        let kv = KvFile::parse("n\tabc").unwrap();
        assert!(kv.parse_value::<u32>("n").is_err());
        assert!(matches!(kv.require("m"), Err(KvError::Missing(_))));
    }
}
