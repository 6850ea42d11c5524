//! Minimal `key=value` text format shared by the geometry, synthetic-data and
//! hyperparameter config files.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so that typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    source: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: idx + 1,
                    msg: format!("expected key=value, got {line:?}"),
                });
            };
            entries.insert(
                key.trim().to_string(),
                (idx + 1, value.trim().to_string()),
            );
        }
        Ok(Self {
            source: source.to_string(),
            entries,
        })
    }

    /// Removes and parses `key`, leaving `default` in place when absent.
    pub fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some((line, value)) => value.parse().map_err(|_| Error::Parse {
                path: self.source.clone(),
                line,
                msg: format!("cannot parse value {value:?} for {key}"),
            }),
        }
    }

    /// Fails if any key was not consumed by `take`.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::Parse {
                path: self.source,
                line,
                msg: format!("unknown key {key:?}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_defaults() {
        let mut kv = KeyValues::parse("# c\na = 3\n\nb=0.5\n", "t").unwrap();
        assert_eq!(kv.take("a", 0usize).unwrap(), 3);
        assert_eq!(kv.take("b", 0.0f64).unwrap(), 0.5);
        assert_eq!(kv.take("c", 7u32).unwrap(), 7);
        kv.finish().unwrap();
    }

    #[test]
    fn rejects_unknown_and_garbage() {
        let kv = KeyValues::parse("zzz=1", "t").unwrap();
        assert!(kv.finish().is_err());
        assert!(KeyValues::parse("novalue", "t").is_err());
        let mut kv = KeyValues::parse("a=x", "t").unwrap();
        let err = kv.take("a", 1usize).unwrap_err();
        assert!(err.to_string().contains("t:1"));
    }
}
