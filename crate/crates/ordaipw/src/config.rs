//! Flat key=value configuration files.
//!
//! Lines are `key = value`; blank lines and `#` comments are skipped.
//! Values stay strings here; the CLI interprets them, with flags taking
//! precedence, and echoes the merged result into every report.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::ConfigError;

pub fn parse_config_str(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("config line {}: expected key = value", lineno + 1)))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Invalid(format!("config line {}: empty key", lineno + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError::Invalid(format!("config line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(map)
}

pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| ConfigError::Invalid(format!("{}: not valid UTF-8", path.display())))?;
    parse_config_str(&text)
}
