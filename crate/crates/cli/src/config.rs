//! Layered JSON configuration: defaults < config file < `--set` < flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Parses `key=value`; the value is read as JSON when possible and as a
/// plain string otherwise.
pub fn parse_override(raw: &str) -> Result<(String, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("override {raw:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::usage(format!("override {raw:?} has an empty key")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

fn merge(base: &mut Map<String, Value>, layer: Map<String, Value>) {
    for (k, v) in layer {
        base.insert(k, v);
    }
}

/// Builds a `T` from its defaults overlaid with the optional config file,
/// the `--set` overrides and finally the explicit flags. Unknown keys at any
/// layer are rejected by `T`'s own deserializer.
pub fn layered<T>(path: Option<&Path>, sets: &[String], flags: Map<String, Value>) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Value::Object(mut cfg) = serde_json::to_value(T::default()).map_err(CliError::internal)? else {
        return Err(CliError::internal("configuration defaults are not an object"));
    };
    if let Some(path) = path {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(file)) => merge(&mut cfg, file),
            Ok(_) => return Err(CliError::usage(format!("{} must hold a JSON object", path.display()))),
            Err(e) => return Err(CliError::usage(format!("{}: {e}", path.display()))),
        }
    }
    let mut over = Map::new();
    for raw in sets {
        let (k, v) = parse_override(raw)?;
        over.insert(k, v);
    }
    merge(&mut cfg, over);
    merge(&mut cfg, flags);
    serde_json::from_value(Value::Object(cfg)).map_err(|e| CliError::usage(format!("invalid configuration: {e}")))
}

/// Collects the flags that were given into a JSON object.
#[derive(Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn opt<V: Serialize>(mut self, key: &str, value: Option<V>) -> Self {
        if let Some(v) = value {
            self.0
                .insert(key.to_string(), serde_json::to_value(v).expect("flag value serializes"));
        }
        self
    }

    pub fn into_map(self) -> Map<String, Value> {
        self.0
    }
}
