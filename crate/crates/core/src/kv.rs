//! Flat `key=value` text files, optionally split into `[section]` blocks.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are trimmed and
//! compared case-sensitively; a repeated key within one block is an error.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    origin: String,
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    pub fn new(origin: impl Into<String>) -> Self {
        KeyValues {
            origin: origin.into(),
            entries: Vec::new(),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let (head, blocks) = parse_blocks(text, origin, None)?;
        debug_assert!(blocks.is_empty());
        Ok(head)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value, 0)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v, _)| (k.as_str(), v.as_str()))
    }

    /// Keys not in `known`, in file order.
    pub fn unknown_keys<'a>(&'a self, known: &[&str]) -> Vec<&'a str> {
        self.keys().filter(|k| !known.contains(k)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `key` if present.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some((_, v, line)) = self.entries.iter().find(|(k, _, _)| k == key) else {
            return Ok(None);
        };
        v.parse::<T>()
            .map(Some)
            .map_err(|_| Error::parse(&self.origin, *line, format!("bad value for {key}: {v:?}")))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get_parsed(key)?
            .ok_or_else(|| Error::parse(&self.origin, 0, format!("missing key {key}")))
    }

    /// Overwrites `*slot` when `key` is present.
    pub fn apply<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get_parsed(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn write_to(&self, out: &mut String) {
        for (k, v, _) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_to(&mut s);
        s
    }
}

/// Splits `text` into a leading header block and one block per `[section]`
/// line. With `section = Some(name)` any other section name is rejected.
pub fn parse_blocks(
    text: &str,
    origin: &str,
    section: Option<&str>,
) -> Result<(KeyValues, Vec<KeyValues>)> {
    let mut head = KeyValues::new(origin);
    let mut blocks: Vec<KeyValues> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            match section {
                Some(expected) if expected == name.trim() => {
                    blocks.push(KeyValues::new(origin));
                    continue;
                }
                _ => {
                    return Err(Error::parse(
                        origin,
                        line_no,
                        format!("unexpected section [{name}]"),
                    ))
                }
            }
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(origin, line_no, "expected key=value"));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::parse(origin, line_no, "empty key"));
        }
        let block = blocks.last_mut().unwrap_or(&mut head);
        if block.get(k).is_some() {
            return Err(Error::parse(origin, line_no, format!("duplicate key {k}")));
        }
        block.entries.push((k.to_string(), v.to_string(), line_no));
    }
    Ok((head, blocks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let kv = KeyValues::parse("# c\nepochs = 12\n\nlr=0.001\n", "t").unwrap();
        assert_eq!(kv.require::<usize>("epochs").unwrap(), 12);
        assert_eq!(kv.get_parsed::<f32>("lr").unwrap(), Some(0.001));
        assert_eq!(kv.get_parsed::<f32>("tau").unwrap(), None);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(KeyValues::parse("a=1\na=2\n", "t").is_err());
        let err = KeyValues::parse("a=1\nnonsense\n", "t").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let kv = KeyValues::parse("a=x\n", "t").unwrap();
        assert!(kv.get_parsed::<u32>("a").is_err());
    }

    #[test]
    fn splits_sections() {
        let text = "root=/d\n[sample]\nid=a\n[sample]\nid=b\n";
        let (head, blocks) = parse_blocks(text, "m", Some("sample")).unwrap();
        assert_eq!(head.get("root"), Some("/d"));
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1].get("id"), Some("b"));
        assert!(parse_blocks("[other]\n", "m", Some("sample")).is_err());
    }
}
