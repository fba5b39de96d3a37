//! `key = value` configuration files with `[section]` headers.
//!
//! Keys before the first header live in the unnamed section `""`. Later
//! assignments of the same key win, which is also how command-line overrides
//! are layered on top of a file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::CliError;

pub const SECTIONS: [&str; 3] = ["mdp", "algo", "experiment"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = Config::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Config(format!("line {}: unterminated section header", i + 1)))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(CliError::Config(format!(
                        "line {}: unknown section [{name}] (expected one of {})",
                        i + 1,
                        SECTIONS.join(", ")
                    )));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", i + 1)));
            }
            config.set(&section, key, value.trim());
        }
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.raw(section, key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Config(format!("[{section}] {key} = {v}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        self.raw(section, key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|x| !x.is_empty())
                    .map(|x| {
                        x.parse()
                            .map_err(|e| CliError::Config(format!("[{section}] {key}: `{x}`: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }
}
