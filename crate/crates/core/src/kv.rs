//! Flat `key = value` text used by the training config and synthetic specs.
//!
//! `#` starts a comment; blank lines are ignored; keys may not repeat.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str, file: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(file, i + 1, format!("expected key=value, found {line:?}")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(file, i + 1, "empty key"));
        }
        if entries.iter().any(|e| e.key == key) {
            return Err(Error::parse(file, i + 1, format!("duplicate key {key:?}")));
        }
        entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(entries)
}

pub fn value<T: FromStr>(e: &Entry, file: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| Error::parse(file, e.line, format!("bad value {:?} for {}", e.value, e.key)))
}

/// Parses a comma-separated list of values.
pub fn list<T: FromStr>(e: &Entry, file: &str) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::parse(file, e.line, format!("bad list item {s:?} for {}", e.key)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blanks_and_whitespace() {
        let e = parse("# header\n a = 1 \n\nb=x,y # trailing\n", "f").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].key.as_str(), e[0].value.as_str(), e[0].line), ("a", "1", 2));
        assert_eq!(list::<String>(&e[1], "f").unwrap(), vec!["x", "y"]);
    }

    #[test]
    fn malformed_lines() {
        assert!(parse("novalue\n", "f").is_err());
        assert!(parse("=3\n", "f").is_err());
        assert!(parse("a=1\na=2\n", "f").is_err());
        let e = parse("a=zz", "f").unwrap();
        assert!(value::<u32>(&e[0], "f").is_err());
    }
}
