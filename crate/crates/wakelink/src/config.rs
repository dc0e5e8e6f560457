//! Experiment configuration from presets, TOML files, environment variables
//! and `key=value` overrides, applied in that order.
//!
//! Keys are dotted paths into [`ExperimentConfig`], e.g. `sim.alpha` or
//! `grid.values_w`. Environment variables use the `WAKELINK_` prefix with
//! `__` between path segments: `WAKELINK_SIM__ALPHA=0.1`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;
use wakelink_core::{ExperimentConfig, NetConfig};

use crate::{Error, Result};

pub const ENV_PREFIX: &str = "WAKELINK_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Desk-scale networks and data sizes.
    #[default]
    Desk,
    /// 500/200/500-neuron networks on the desk task.
    Paper,
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk();
        if self == Preset::Paper {
            c.network = NetConfig::paper();
        }
        c
    }
}

/// Parses an override value as a TOML literal, falling back to a bare
/// string (so `fading.kind=rician` works without quotes).
pub fn parse_value(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets `path` inside `root`, creating intermediate tables.
pub fn set_path(root: &mut Value, path: &[&str], value: Value) -> Result<()> {
    let Some((last, parents)) = path.split_last() else {
        return Err(Error::Config("empty override key".into()));
    };
    let mut node = root;
    for seg in parents {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {} crosses a value", path.join("."))))?;
        node = table
            .entry((*seg).to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override path {} crosses a value", path.join("."))))?;
    table.insert((*last).to_string(), value);
    Ok(())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// One `key=value` override.
pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Config(format!("override {s:?} has an empty key")));
    }
    Ok((k.to_string(), parse_value(v.trim())))
}

/// Environment overrides among `vars`, as dotted lowercase keys.
pub fn env_overrides<I: IntoIterator<Item = (String, String)>>(vars: I) -> Vec<(String, Value)> {
    let mut out: Vec<(String, Value)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            if rest.is_empty() {
                return None;
            }
            let key = rest.split("__").map(str::to_lowercase).collect::<Vec<_>>().join(".");
            Some((key, parse_value(&v)))
        })
        .collect();
    // Environment iteration order is unspecified.
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Builds and validates a configuration.
pub fn resolve(
    preset: Preset,
    file: Option<&Path>,
    overrides: &[(String, Value)],
) -> Result<ExperimentConfig> {
    let mut root = Value::try_from(preset.config()).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: Value = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        merge(&mut root, parsed);
    }
    for (key, value) in overrides {
        let segs: Vec<&str> = key.split('.').collect();
        set_path(&mut root, &segs, value.clone())?;
    }
    let cfg: ExperimentConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

/// TOML text of a configuration, the inverse of [`resolve`] with no
/// overrides.
pub fn to_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))
}
