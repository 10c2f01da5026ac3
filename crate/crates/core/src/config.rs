//! Line-oriented `key = value` configuration files.
//!
//! The format is deliberately small: one assignment per line, `#` starts a
//! comment, blank lines are ignored, and `include <path>` splices another
//! file in place (relative to the including file). Later assignments win,
//! so an including file can override anything it pulled in.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Maximum include depth before the parser assumes a cycle.
const MAX_INCLUDE_DEPTH: usize = 16;

/// A parsed configuration: ordered key/value pairs plus provenance.
#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a configuration from text, without include support.
    pub fn from_str_no_includes(text: &str) -> Result<Self> {
        let mut cfg = Self::new();
        cfg.absorb(text, None, 0)?;
        Ok(cfg)
    }

    /// Loads a configuration file, following `include` directives.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::new();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.absorb(&text, Some(path), 0)?;
        Ok(cfg)
    }

    fn absorb(&mut self, text: &str, origin: Option<&Path>, depth: usize) -> Result<()> {
        if depth > MAX_INCLUDE_DEPTH {
            return Err(Error::Config(format!(
                "include depth exceeds {MAX_INCLUDE_DEPTH} (include cycle?)"
            )));
        }
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("include") {
                let rest = rest.trim();
                if rest.is_empty() {
                    return Err(self.line_err(origin, lineno, "include without a path"));
                }
                let inc_path = resolve_include(origin, rest);
                let inc_text = std::fs::read_to_string(&inc_path).map_err(|e| {
                    self.line_err(origin, lineno, &format!("{}: {e}", inc_path.display()))
                })?;
                self.absorb(&inc_text, Some(&inc_path), depth + 1)?;
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(self.line_err(origin, lineno, &format!("expected key=value, got {line:?}")));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(self.line_err(origin, lineno, "empty key"));
            }
            self.values.insert(key.to_string(), value.to_string());
        }
        Ok(())
    }

    fn line_err(&self, origin: Option<&Path>, lineno: usize, msg: &str) -> Error {
        let place = origin
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "<inline>".to_string());
        Error::Config(format!("{place}:{}: {msg}", lineno + 1))
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// Typed lookup; absent key is `None`, malformed value is an error.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("key {key}: cannot parse {s:?}: {e}"))),
        }
    }

    /// Typed lookup with a default for absent keys.
    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Typed lookup that treats an absent key as an error.
    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    /// Parses a comma-separated list of values.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(s) if s.trim().is_empty() => Ok(Some(Vec::new())),
            Some(s) => s
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<T>().map_err(|e| {
                        Error::Config(format!("key {key}: cannot parse {tok:?}: {e}"))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Serializes back to text, keys in sorted order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.iter() {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn resolve_include(origin: Option<&Path>, rel: &str) -> PathBuf {
    let rel_path = Path::new(rel);
    if rel_path.is_absolute() {
        return rel_path.to_path_buf();
    }
    match origin.and_then(|p| p.parent()) {
        Some(dir) => dir.join(rel_path),
        None => rel_path.to_path_buf(),
    }
}
