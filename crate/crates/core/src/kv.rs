//! Flat `key = value` text used for fault plans and experiment configs.
//! `#` starts a comment anywhere on a line; keys must be unique.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct KvError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct KvDoc {
    values: BTreeMap<String, (usize, String)>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| KvError { line: i + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            if values.insert(k.to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(err(format!("duplicate key `{k}`")));
            }
        }
        Ok(Self { values })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| KvError {
                line: *line,
                message: format!("cannot parse value {v:?} for `{key}`"),
            }),
        }
    }

    /// Comma- or whitespace-separated list; an empty value is an empty list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, KvError> {
        let Some((line, v)) = self.values.get(key) else {
            return Ok(None);
        };
        v.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| KvError {
                    line: *line,
                    message: format!("cannot parse list item {s:?} for `{key}`"),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Rejects keys outside `allowed`.
    pub fn expect_only(&self, allowed: &[&str]) -> Result<(), KvError> {
        for (k, (line, _)) in &self.values {
            if !allowed.contains(&k.as_str()) {
                return Err(KvError { line: *line, message: format!("unknown key `{k}`") });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_lists_and_comments() {
        let doc = KvDoc::parse("# header\nseed = 7\n\nerased = 1, 2 3\nname=x = y\n").unwrap();
        assert_eq!(doc.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(doc.get_list::<u32>("erased").unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(doc.raw("name"), Some("x = y"));
        assert_eq!(doc.get::<u64>("missing").unwrap(), None);
        let doc = KvDoc::parse("users = fixed   # or random\n  # indented\n").unwrap();
        assert_eq!(doc.raw("users"), Some("fixed"));
    }

    #[test]
    fn reports_line_numbers() {
        let err = KvDoc::parse("a = 1\nbogus\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = KvDoc::parse("a = 1\na = 2\n").unwrap_err();
        assert_eq!(err.line, 2);
        let doc = KvDoc::parse("a = x\n").unwrap();
        assert_eq!(doc.get::<u32>("a").unwrap_err().line, 1);
        assert!(doc.expect_only(&["b"]).is_err());
    }
}
