//! Line-oriented `key = value` files.
//!
//! One grammar serves machine specs, virtual-platform schedules, and run
//! configuration so users only learn a single format. Rules:
//!
//! * UTF-8 text, one `key = value` pair per line;
//! * `#` starts a comment that runs to end of line;
//! * blank lines are ignored;
//! * keys are dotted lowercase identifiers (`cache.0.capacity_bytes`);
//! * a key may appear at most once per file.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: invalid key {key:?}")]
    BadKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("key {key:?}: expected {expected}, got {value:?}")]
    BadValue {
        key: String,
        expected: &'static str,
        value: String,
    },
}

/// Parsed file contents. Preserves insertion order so round-trips are stable.
#[derive(Debug, Clone, Default)]
pub struct KvFile {
    entries: Vec<(String, String)>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|part| {
            !part.is_empty()
                && part
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        })
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| KvError::Malformed {
                line: line_no,
                text: raw.trim().to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !valid_key(key) {
                return Err(KvError::BadKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(KvError::Duplicate {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            entries.push((key.to_string(), value.to_string()));
        }
        Ok(KvFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, KvError> {
        self.parse_with(key, "unsigned integer", |v| v.replace('_', "").parse().ok())
    }

    pub fn get_u32(&self, key: &str) -> Result<Option<u32>, KvError> {
        self.parse_with(key, "unsigned integer", |v| v.replace('_', "").parse().ok())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, KvError> {
        self.parse_with(key, "number", |v| v.replace('_', "").parse().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, KvError> {
        self.parse_with(key, "true/false", |v| match v {
            "true" | "1" | "yes" => Some(true),
            "false" | "0" | "no" => Some(false),
            _ => None,
        })
    }

    fn parse_with<T>(
        &self,
        key: &str,
        expected: &'static str,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, KvError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => f(v).map(Some).ok_or_else(|| KvError::BadValue {
                key: key.to_string(),
                expected,
                value: v.to_string(),
            }),
        }
    }

    /// All keys, in file order.
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Collects `prefix.<n>.field = value` groups into per-index maps, sorted
    /// by index and checked for gaps (indices must be 0..count).
    pub fn indexed_groups(&self, prefix: &str) -> Result<Vec<BTreeMap<String, String>>, KvError> {
        let mut groups: BTreeMap<u64, BTreeMap<String, String>> = BTreeMap::new();
        let lead = format!("{prefix}.");
        for (key, value) in &self.entries {
            let Some(rest) = key.strip_prefix(&lead) else {
                continue;
            };
            let Some((index, field)) = rest.split_once('.') else {
                continue;
            };
            let index: u64 = index.parse().map_err(|_| KvError::BadKey {
                line: 0,
                key: key.clone(),
            })?;
            groups
                .entry(index)
                .or_default()
                .insert(field.to_string(), value.clone());
        }
        for (expect, actual) in groups.keys().enumerate() {
            if expect as u64 != *actual {
                return Err(KvError::BadKey {
                    line: 0,
                    key: format!("{prefix}.{actual}.* (indices must start at 0 with no gaps)"),
                });
            }
        }
        Ok(groups.into_values().collect())
    }
}

/// Builder for writing the same format back out.
#[derive(Debug, Default)]
pub struct KvWriter {
    text: String,
}

impl KvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) {
        let _ = writeln!(self.text, "# {text}");
    }

    pub fn blank(&mut self) {
        self.text.push('\n');
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        debug_assert!(valid_key(key), "invalid key {key:?}");
        let _ = writeln!(self.text, "{key} = {value}");
    }

    pub fn finish(self) -> String {
        self.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_pairs() {
        let f = KvFile::parse("# header\n\nname = a64fx # trailing\nfrequency_hz = 1_800_000_000\n")
            .unwrap();
        assert_eq!(f.get("name"), Some("a64fx"));
        assert_eq!(f.get_u64("frequency_hz").unwrap(), Some(1_800_000_000));
        assert_eq!(f.get("missing"), None);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(matches!(
            KvFile::parse("a = 1\na = 2\n"),
            Err(KvError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            KvFile::parse("just some words\n"),
            Err(KvError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            KvFile::parse("Bad-Key = 1\n"),
            Err(KvError::BadKey { .. })
        ));
    }

    #[test]
    fn indexed_groups_require_dense_indices() {
        let f = KvFile::parse("cache.0.name = L1d\ncache.0.size = 1\ncache.1.name = L2\n").unwrap();
        let groups = f.indexed_groups("cache").unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0]["name"], "L1d");
        assert_eq!(groups[1]["name"], "L2");

        let gap = KvFile::parse("cache.1.name = L2\n").unwrap();
        assert!(gap.indexed_groups("cache").is_err());
    }

    #[test]
    fn writer_output_reparses() {
        let mut w = KvWriter::new();
        w.comment("demo");
        w.set("name", "x");
        w.set("cores.count", 4);
        let text = w.finish();
        let f = KvFile::parse(&text).unwrap();
        assert_eq!(f.get("cores.count"), Some("4"));
    }
}
