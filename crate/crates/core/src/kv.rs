//! Plain-text `key = value` documents used for configs, manifests and model
//! descriptions. Blank lines and lines starting with `#` are ignored; keys
//! may repeat and keep their order.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Format(format!("line {}: empty key", n + 1)));
            }
            entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(KvDoc { entries })
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Replaces every existing value of `key`, or appends it.
    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        let value = value.to_string();
        let mut found = false;
        self.entries.retain_mut(|(k, v)| {
            if k != key {
                return true;
            }
            if found {
                return false;
            }
            found = true;
            *v = value.clone();
            true
        });
        if !found {
            self.entries.push((key.to_string(), value));
        }
    }

    /// Last value given for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Parses the value of `key` when present.
    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Format(format!("invalid value `{raw}` for `{key}`"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse_value(key)?
            .ok_or_else(|| Error::Format(format!("missing key `{key}`")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }
}

impl fmt::Display for KvDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Comma-separated list parsing, e.g. `128,128,128`.
pub fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Format(format!("invalid list item `{s}`"))))
        .collect()
}

pub fn join_list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let doc = KvDoc::parse("# comment\na = 1\n\nevent = 1,2,3\nevent = 4,5,6\n").unwrap();
        assert_eq!(doc.get("a"), Some("1"));
        assert_eq!(doc.get_all("event").count(), 2);
        assert_eq!(doc.to_string(), "a = 1\nevent = 1,2,3\nevent = 4,5,6\n");
        assert_eq!(KvDoc::parse(&doc.to_string()).unwrap(), doc);
    }

    #[test]
    fn set_replaces() {
        let mut doc = KvDoc::parse("a = 1\nb = 2\na = 3").unwrap();
        doc.set("a", 9);
        assert_eq!(doc.to_string(), "a = 9\nb = 2\n");
        doc.set("c", "x");
        assert_eq!(doc.get("c"), Some("x"));
    }

    #[test]
    fn errors() {
        assert!(KvDoc::parse("novalue").is_err());
        let doc = KvDoc::parse("n = abc").unwrap();
        assert!(doc.parse_value::<u32>("n").is_err());
        assert!(doc.require::<u32>("m").is_err());
        assert_eq!(parse_list::<u32>("1, 2,3").unwrap(), vec![1, 2, 3]);
    }
}
