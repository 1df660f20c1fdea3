//! Run configuration: one TOML file with `[env]`, `[graph]`, `[hgg]`,
//! `[learner]` and `[trainer]` tables. Any key can be overridden with a flat
//! dotted path (`hgg.delta_stop=0.5`).
//!
//! `[env]` may name a built-in environment with `preset = "..."`; the other
//! keys of the table are then merged over the preset. `[graph]` lattice
//! counts default to the preset's lattice.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::env::{preset, preset_lattice, EnvConfig};
use crate::error::{Error, Result};
use crate::goalgen::HggParams;
use crate::learner::QConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub n_x: usize,
    pub n_y: usize,
    pub n_z: usize,
}

impl GraphConfig {
    pub fn counts(&self) -> [usize; 3] {
        [self.n_x, self.n_y, self.n_z]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub graph: GraphConfig,
    #[serde(default)]
    pub hgg: HggParams,
    #[serde(default)]
    pub learner: QConfig,
    #[serde(default)]
    pub trainer: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.hgg.validate()?;
        self.learner.validate()?;
        self.trainer.validate()?;
        if self.graph.counts().iter().any(|&n| n < 2) {
            return Err(Error::InvalidLattice(format!("need at least 2 points per axis, got {:?}", self.graph.counts())));
        }
        Ok(())
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

/// Reads and resolves a config file, applying `key=value` overrides.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let table: Table = toml::from_str(&text).map_err(|e| invalid(format!("{}: {}", path.display(), e.message())))?;
    resolve(table, overrides)
}

/// Parses config text; see [`load`].
pub fn from_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let table: Table = toml::from_str(text).map_err(|e| invalid(e.message().to_string()))?;
    resolve(table, overrides)
}

fn resolve(mut table: Table, overrides: &[String]) -> Result<RunConfig> {
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let env = match table.remove("env") {
        Some(Value::Table(t)) => resolve_env(t)?,
        Some(_) => return Err(invalid("[env] must be a table")),
        None => return Err(invalid("missing [env] table")),
    };
    let name = env.get("name").and_then(Value::as_str).map(str::to_owned);
    table.insert("env".into(), Value::Table(env));

    let graph = table.entry("graph").or_insert_with(|| Value::Table(Table::new()));
    let Value::Table(graph) = graph else {
        return Err(invalid("[graph] must be a table"));
    };
    let lattice = name.as_deref().and_then(preset_lattice);
    for (axis, key) in ["n_x", "n_y", "n_z"].into_iter().enumerate() {
        if !graph.contains_key(key) {
            let n = lattice.ok_or_else(|| invalid(format!("graph.{key} is required for a custom environment")))?[axis];
            graph.insert(key.into(), Value::Integer(n as i64));
        }
    }

    let config: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| invalid(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

fn resolve_env(mut env: Table) -> Result<Table> {
    let Some(name) = env.remove("preset") else {
        return Ok(env);
    };
    let name = name.as_str().ok_or_else(|| invalid("env.preset must be a string"))?;
    let base = Value::try_from(preset(name)?).map_err(|e| invalid(e.to_string()))?;
    let Value::Table(mut base) = base else { unreachable!("environments serialize to tables") };
    merge(&mut base, env);
    Ok(base)
}

/// Recursively merges `over` into `base`; non-table values replace.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// value when possible and as a bare string otherwise.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| invalid(format!("override '{spec}' is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("override key '{key}' is malformed")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let next = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match next {
            Value::Table(t) => t,
            _ => return Err(invalid(format!("override '{key}': '{p}' is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
