//! Settings resolved from flags, an optional TOML file and built-in defaults,
//! in that order of precedence.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliResult;
use scsr::ScsrError;

#[derive(Debug, Clone, Serialize)]
pub struct Resolved<T> {
    pub value: T,
    /// Where each top-level key came from: `flag`, `file` or `default`.
    pub sources: BTreeMap<String, &'static str>,
}

pub fn resolve<T>(file: Option<&Path>, flags: Vec<(&str, Option<Value>)>) -> CliResult<Resolved<T>>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Value::Object(mut merged) = serde_json::to_value(T::default()).expect("defaults serialize")
    else {
        unreachable!("config structs serialize to objects")
    };
    let mut sources: BTreeMap<String, &'static str> =
        merged.keys().map(|k| (k.clone(), "default")).collect();

    if let Some(path) = file {
        let text = scsr::io::read_text(path)?;
        let table: toml::Table = toml::from_str(&text)
            .map_err(|e| ScsrError::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(overrides) = serde_json::to_value(table).expect("toml maps to json")
        else {
            unreachable!()
        };
        overlay(&mut merged, &mut sources, overrides, "file");
    }
    let flag_values: Map<String, Value> = flags
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
    overlay(&mut merged, &mut sources, flag_values, "flag");

    let value = serde_json::from_value(Value::Object(merged))
        .map_err(|e| ScsrError::Config(e.to_string()))?;
    Ok(Resolved { value, sources })
}

fn overlay(
    merged: &mut Map<String, Value>,
    sources: &mut BTreeMap<String, &'static str>,
    overrides: Map<String, Value>,
    source: &'static str,
) {
    for (k, v) in overrides {
        sources.insert(k.clone(), source);
        merged.insert(k, v);
    }
}

/// A flag value as JSON, or `None` when the flag was not given.
pub fn flag<T: Serialize>(v: &Option<T>) -> Option<Value> {
    v.as_ref()
        .map(|x| serde_json::to_value(x).expect("flag serializes"))
}
