//! Flat `key = value` configuration files and flag/file merging.
//!
//! Lines are `key = value`; `#` starts a comment. A key may repeat to build a
//! list. Dashes in keys are read as underscores, so `lambda-tilde` and
//! `lambda_tilde` are the same key.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "x",
    "y",
    "header",
    "out",
    "seed",
    "alpha",
    "k",
    "k_bar",
    "reps",
    "threads",
    "folds",
    "c0",
    "cv",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda_tilde",
    "entries",
    "responses",
    "correction",
    "experiment",
    "select_k",
    "n",
    "p",
    "m",
    "eta",
    "s",
    "s_m",
    "theta_signal",
    "b_m",
    "sigma_w",
    "r",
    "project_theta",
];

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

pub fn parse_config(text: &str, origin: &str) -> Result<BTreeMap<String, Vec<String>>, CliError> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key = value", lineno + 1)))?;
        let key = normalize(key);
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("{origin}:{}: unknown key '{key}'", lineno + 1)));
        }
        out.entry(key).or_default().push(value.trim().to_string());
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<BTreeMap<String, Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

/// Values from the config file overlaid by command-line flags. Every value
/// that is read is echoed into `resolved` for the run manifest.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, Vec<String>>,
    resolved: BTreeMap<String, Vec<String>>,
}

impl Settings {
    pub fn new(file: BTreeMap<String, Vec<String>>) -> Self {
        Settings {
            file,
            resolved: BTreeMap::new(),
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, Vec<String>> {
        &self.resolved
    }

    /// Flag value if given, else the (last) file value.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key).and_then(|v| v.last()) {
                Some(text) => Some(
                    text.parse::<T>()
                        .map_err(|e| CliError::Config(format!("invalid value '{text}' for {key}: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), vec![v.to_string()]);
        }
        Ok(value)
    }

    pub fn get_or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.get(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_string(), vec![default.to_string()]);
                Ok(default)
            }
        }
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.get(key, flag)?
            .ok_or_else(|| CliError::Config(format!("missing required setting '{key}'")))
    }

    /// List setting: flags replace the file's list; comma-separated items are split.
    pub fn list(&mut self, key: &str, flag: &[String]) -> Vec<String> {
        let source: Vec<String> = if flag.is_empty() {
            self.file.get(key).cloned().unwrap_or_default()
        } else {
            flag.to_vec()
        };
        let items: Vec<String> = source
            .iter()
            .flat_map(|v| v.split(','))
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if !items.is_empty() {
            self.resolved.insert(key.to_string(), items.clone());
        }
        items
    }
}
