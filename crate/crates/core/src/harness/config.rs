//! Flat JSON configuration with dotted keys.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{Map, Value};

use super::{ModelKind, ScenarioConfig};
use crate::error::{Error, Result};

/// Read a flat JSON object of dotted keys.
pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
    };
    let mut out = BTreeMap::new();
    for (k, v) in map {
        if v.is_object() || v.is_array() {
            return Err(Error::Config(format!("key '{k}': values must be scalars; nest with dotted keys")));
        }
        out.insert(k, v);
    }
    Ok(out)
}

fn coerce(key: &str, old: &Value, new: &Value) -> Result<Value> {
    let mismatch = || Error::Config(format!("key '{key}': expected a value like {old}, got {new}"));
    match (old, new) {
        (Value::Bool(_), Value::Bool(_)) => Ok(new.clone()),
        (Value::Bool(_), Value::Number(n)) => match n.as_f64() {
            Some(0.0) => Ok(Value::Bool(false)),
            Some(1.0) => Ok(Value::Bool(true)),
            _ => Err(mismatch()),
        },
        (Value::Number(_), Value::Number(_)) => Ok(new.clone()),
        (Value::String(_), Value::String(_)) => Ok(new.clone()),
        _ => Err(mismatch()),
    }
}

fn set_path(tree: &mut Value, key: &str, value: &Value) -> Result<()> {
    let unknown = || Error::Config(format!("unknown configuration key '{key}'"));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map: &mut Map<String, Value> = node.as_object_mut().ok_or_else(unknown)?;
        let slot = map.get_mut(*part).ok_or_else(unknown)?;
        if i + 1 == parts.len() {
            if slot.is_object() {
                return Err(unknown());
            }
            *slot = coerce(key, slot, value)?;
            return Ok(());
        }
        node = slot;
    }
    Err(unknown())
}

/// Apply dotted-key overrides. A `model` key is applied first so that motor
/// parameter overrides refine the selected preset.
pub fn apply_overrides(cfg: &ScenarioConfig, overrides: &BTreeMap<String, Value>) -> Result<ScenarioConfig> {
    let mut base = cfg.clone();
    if let Some(m) = overrides.get("model") {
        let name = m
            .as_str()
            .ok_or_else(|| Error::Config(format!("key 'model': expected a string, got {m}")))?;
        base.set_model(name.parse::<ModelKind>()?);
    }
    let mut tree = serde_json::to_value(&base)?;
    for (k, v) in overrides {
        if k == "model" {
            continue;
        }
        set_path(&mut tree, k, v)?;
    }
    let out: ScenarioConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
    out.validate()?;
    Ok(out)
}
