//! Flag values merged over an optional `key = value` config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::CliError;

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys are normalized so `t_end` and `t-end` are the same setting.
pub fn parse_config(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{origin}:{}: expected `key = value`, got {raw:?}",
                lineno + 1
            ))
        })?;
        let key = normalize_key(key);
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(CliError::Usage(format!(
                "{origin}:{}: empty key or value",
                lineno + 1
            )));
        }
        out.insert(key, value.to_string());
    }
    Ok(out)
}

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

/// Effective settings for one command.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Loads `config` (if any), rejects keys the command does not know, then
    /// lays the explicitly given flags on top.
    pub fn merge(
        config: Option<&Path>,
        flags: Vec<(&'static str, Option<String>)>,
    ) -> Result<Settings, CliError> {
        let mut values = match config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                parse_config(&text, &path.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        if let Some(unknown) = values
            .keys()
            .find(|k| !flags.iter().any(|(name, _)| name == k))
        {
            return Err(CliError::Usage(format!(
                "unknown config key {unknown:?} for this command"
            )));
        }
        for (name, value) in flags {
            if let Some(v) = value {
                values.insert(name.to_string(), v);
            }
        }
        Ok(Settings { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn parse_int<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| {
                    CliError::Usage(format!("--{key}: expected an integer, got {v:?}"))
                })
            })
            .transpose()
    }
}

/// Splits a comma-separated flag value, dropping empty entries.
pub fn split_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
