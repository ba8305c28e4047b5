//! Flag and config-file merging. The file wins on conflicts.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Flat key/value view of a TOML config file.
pub fn load(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
    let mut out = Map::new();
    for (k, v) in table {
        out.insert(normalize_key(&k), scalar(&k, &v)?);
    }
    Ok(out)
}

fn normalize_key(k: &str) -> String {
    if k == "n" {
        return "N".into();
    }
    k.replace('-', "_")
}

fn scalar(key: &str, v: &toml::Value) -> Result<Value, CliError> {
    Ok(match v {
        toml::Value::String(s) => Value::String(s.clone()),
        toml::Value::Integer(i) => Value::String(i.to_string()),
        toml::Value::Float(f) => Value::String(f.to_string()),
        toml::Value::Boolean(b) => Value::Bool(*b),
        toml::Value::Array(items) => {
            let parts = items
                .iter()
                .map(|i| match scalar(key, i)? {
                    Value::String(s) => Ok(s),
                    _ => Err(CliError::Config(format!("config key '{key}': unsupported list item"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Value::String(parts.join(","))
        }
        _ => return Err(CliError::Config(format!("config key '{key}': unsupported value"))),
    })
}

/// Overlay `file` onto `args`, consuming the keys it uses.
pub fn overlay<T: Serialize + DeserializeOwned>(args: T, file: &mut Map<String, Value>) -> Result<T, CliError> {
    let Value::Object(mut obj) = serde_json::to_value(&args).map_err(|e| CliError::Config(e.to_string()))? else {
        unreachable!("argument structs serialize to objects");
    };
    let keys: Vec<String> = obj.keys().cloned().collect();
    for k in keys {
        let Some(v) = file.remove(&k) else { continue };
        let current = &obj[&k];
        let explicit = match current {
            Value::Null => false,
            Value::Bool(b) => *b,
            _ => true,
        };
        if explicit && *current != v {
            log::warn!("config file overrides --{}: {} -> {}", k.replace('_', "-"), current, v);
        }
        obj.insert(k, v);
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| CliError::Config(format!("config: {e}")))
}

/// Error out on keys no command consumed.
pub fn reject_unused(file: &Map<String, Value>) -> Result<(), CliError> {
    match file.keys().next() {
        Some(k) => Err(CliError::Config(format!("unknown config key '{k}'"))),
        None => Ok(()),
    }
}
