//! Flat `key = value` configuration files.
//!
//! Keys are the long flag names (dashes or underscores). Blank lines and
//! lines starting with `#` are ignored. A value given on the command line
//! always wins over the file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult, Kind};

pub const KNOWN_KEYS: &[&str] = &[
    "source",
    "target",
    "alignment",
    "table",
    "table_format",
    "stats",
    "nbest",
    "references",
    "output",
    "table_out",
    "stats_out",
    "trace",
    "weights",
    "beam_width",
    "max_phrase_len",
    "smoothing_floor",
    "distortion_limit",
    "on_error",
    "word_penalty",
    "num_samples",
    "max_len",
    "seed",
    "strategy",
    "dedupe",
    "scorer_cmd",
    "bigram_corpus",
    "bigram_alpha",
    "beam_best",
    "w2_grid",
    "wwp_grid",
];

#[derive(Debug, Default)]
pub struct Config {
    values: HashMap<String, String>,
    origin: String,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| CliError::new(Kind::Format, format!("{origin}:{}: {msg}", idx + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(bad(format!("unknown key `{key}`")));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(bad(format!("duplicate key `{key}`")));
            }
        }
        Ok(Config {
            values,
            origin: origin.to_string(),
        })
    }

    /// The flag value if given, else the parsed config value, else `None`.
    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| {
                CliError::new(Kind::Format, format!("{}: bad value `{v}` for `{key}`: {e}", self.origin))
            }),
        }
    }

    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(flag, key)?
            .ok_or_else(|| CliError::usage(format!("missing --{}", key.replace('_', "-"))))
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
        self.require(flag, key)
    }

    /// Boolean switches: set on the command line, or `true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> CliResult<bool> {
        Ok(flag || self.get::<bool>(None, key)?.unwrap_or(false))
    }
}
