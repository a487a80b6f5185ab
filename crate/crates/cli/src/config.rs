//! Config files are TOML: top-level keys apply to every subcommand, and a
//! section named after the subcommand (`[converge-sde]`, `[moments]`, ...)
//! overrides them. Sections for other subcommands are ignored.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use toml::{Table, Value};

use crate::Command;

const SECTIONS: [&str; 7] = ["moments", "cjn", "sup", "converge-sde", "converge-spde", "decompose", "lemmas"];

/// Settings of the approximant diagnostics (`moments`, `cjn`, `sup`).
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    pub horizon: f64,
    pub step: f64,
    pub dims: usize,
    pub paths: usize,
    pub deltas: Vec<f64>,
    /// `k(δ) = ⌈δ^(-k_exponent)⌉` for `cjn`.
    pub k_exponent: f64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            step: 2f64.powi(-10),
            dims: 1,
            paths: 10_000,
            deltas: (4..=10).map(|e| 2f64.powi(-e)).collect(),
            k_exponent: 0.5,
        }
    }
}

/// Reads the raw table for `cmd`; no file means an empty table.
pub fn load_table(path: Option<&Path>, cmd: Command) -> Result<Table> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    let doc: Table = text.parse().with_context(|| format!("cannot parse config file {}", path.display()))?;
    merge(doc, cmd.name())
}

fn merge(doc: Table, section: &str) -> Result<Table> {
    let mut merged = Table::new();
    let mut overrides = None;
    for (key, value) in doc {
        if key == section {
            match value {
                Value::Table(t) => overrides = Some(t),
                _ => bail!("`{section}` must be a section"),
            }
        } else if SECTIONS.contains(&key.as_str()) {
            continue;
        } else {
            merged.insert(key, value);
        }
    }
    for (key, value) in overrides.unwrap_or_default() {
        merged.insert(key, value);
    }
    if merged.contains_key("seed") {
        bail!("the seed comes from --seed only; remove `seed` from the config");
    }
    Ok(merged)
}

/// Removes an optional key of the CLI layer before the rest is parsed strictly.
pub fn take<T: DeserializeOwned>(table: &mut Table, key: &str) -> Result<Option<T>> {
    table.remove(key).map(|v| v.try_into().with_context(|| format!("bad value for `{key}`"))).transpose()
}

pub fn parse<T: DeserializeOwned>(table: Table) -> Result<T> {
    Ok(Value::Table(table).try_into()?)
}
