//! Flat `key = value` configuration with precedence CLI > file > defaults.
//!
//! Every experiment config is a serde struct. Its default serializes to a
//! JSON object whose keys are the only accepted keys; file values are
//! parsed according to the type of the default value.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::error::CliError;

/// Keys shared by every experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Common {
    pub seed: u64,
    /// output directory; empty means `results/<command>`
    pub out: String,
    /// worker threads; 0 means all cores
    pub jobs: usize,
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are
/// ignored; a repeated key is an error.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
        let key = key.trim().replace('-', "_");
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", no + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {key}", no + 1)));
        }
    }
    Ok(map)
}

pub fn read_flat(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_flat(&text)
}

fn parse_number(key: &str, text: &str, integer: bool) -> Result<Value, CliError> {
    let bad = || CliError::Config(format!("{key}: cannot parse {text:?} as a number"));
    if integer {
        let n: u64 = text.parse().map_err(|_| bad())?;
        Ok(Value::Number(n.into()))
    } else {
        let x: f64 = text.parse().map_err(|_| bad())?;
        Number::from_f64(x).map(Value::Number).ok_or_else(bad)
    }
}

fn parse_like(key: &str, text: &str, template: &Value) -> Result<Value, CliError> {
    match template {
        Value::Bool(_) => text
            .parse()
            .map(Value::Bool)
            .map_err(|_| CliError::Config(format!("{key}: expected true or false, got {text:?}"))),
        Value::Number(n) => parse_number(key, text, n.is_u64() || n.is_i64()),
        Value::String(_) => Ok(Value::String(text.to_string())),
        Value::Array(items) => {
            let integer = items.first().is_some_and(|v| v.is_u64() || v.is_i64());
            text.split(',')
                .map(|t| parse_number(key, t.trim(), integer))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array)
        }
        _ => Err(CliError::Config(format!("{key}: unsupported value type"))),
    }
}

/// Resolves `T` from its defaults, then the file entries, then the CLI
/// overrides (already typed; `None` fields are skipped when serialized).
pub fn resolve<T, O>(file: &BTreeMap<String, String>, overrides: &O) -> Result<T, CliError>
where
    T: Default + Serialize + DeserializeOwned,
    O: Serialize,
{
    let Value::Object(mut merged) = serde_json::to_value(T::default()).map_err(config_err)? else {
        return Err(CliError::Config("config defaults must be a map".into()));
    };
    for (key, text) in file {
        let template = merged
            .get(key)
            .ok_or_else(|| CliError::Config(format!("unknown key {key:?}")))?;
        let value = parse_like(key, text, template)?;
        merged.insert(key.clone(), value);
    }
    if let Value::Object(cli) = serde_json::to_value(overrides).map_err(config_err)? {
        for (key, value) in cli {
            if !merged.contains_key(&key) {
                return Err(CliError::Config(format!("unknown key {key:?}")));
            }
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(config_err)
}

fn config_err(e: serde_json::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Keeps only the entries of `map` that are set; used to merge the common
/// flags into a command's overrides.
pub fn merge_overrides<A: Serialize, B: Serialize>(a: &A, b: &B) -> Result<Map<String, Value>, CliError> {
    let mut out = Map::new();
    for part in [serde_json::to_value(a), serde_json::to_value(b)] {
        if let Value::Object(m) = part.map_err(config_err)? {
            out.extend(m.into_iter().filter(|(_, v)| !v.is_null()));
        }
    }
    Ok(out)
}
