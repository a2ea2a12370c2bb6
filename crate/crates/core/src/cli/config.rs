//! Run configuration: defaults, TOML file, and `key=value` overrides merged
//! into one validated tree with a content fingerprint.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::experiment::{desk_arch, desk_train, DeskData};
use crate::infer::{EvalOptions, IntegratorConfig};
use crate::nets::ArchConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub integrator: IntegratorConfig,
    /// Active-coordinate variance threshold; `None` picks one from `d_z`.
    pub threshold: Option<f64>,
    /// Output lattice size for `predict`; `None` uses the data grid.
    pub predict_resolution: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            integrator: IntegratorConfig::default(),
            threshold: None,
            predict_resolution: None,
        }
    }
}

impl EvalConfig {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            integrator: self.integrator,
            threshold: self.threshold,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lambdas: vec![0.0, 0.05, 0.1, 0.2, 0.5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DeskData,
    pub model: ArchConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DeskData::default(),
            model: desk_arch(32, 10),
            train: desk_train(0.1, 0),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Where a resolved configuration came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base: Option<PathBuf>,
    pub file: Option<PathBuf>,
    pub overrides: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub provenance: Provenance,
}

fn to_table<S: Serialize>(value: &S) -> Table {
    match Value::try_from(value).expect("configuration serializes to TOML") {
        Value::Table(t) => t,
        _ => unreachable!("configuration is a table"),
    }
}

fn hash_hex<S: Serialize>(value: &S) -> String {
    let text = toml::to_string(value).expect("configuration serializes to TOML");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn prefix_key(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { key, msg } if !key.starts_with(prefix) => Error::Config {
            key: format!("{prefix}{key}"),
            msg,
        },
        other => other,
    }
}

impl RunConfig {
    /// Identifies the data section; recorded with generated datasets.
    pub fn data_fingerprint(&self) -> String {
        hash_hex(&self.data)
    }

    /// Identifies everything that determines trained weights; recorded with checkpoints.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            data: &'a DeskData,
            model: &'a ArchConfig,
            train: &'a TrainConfig,
        }
        hash_hex(&Key {
            data: &self.data,
            model: &self.model,
            train: &self.train,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.n_train == 0 {
            return Err(Error::config("data.n_train", "must be >= 1"));
        }
        if d.n_test == 0 {
            return Err(Error::config("data.n_test", "must be >= 1"));
        }
        if d.train_len < 4 {
            return Err(Error::config("data.train_len", "a jerk window needs at least 4 snapshots"));
        }
        if d.workers == 0 {
            return Err(Error::config("data.workers", "must be >= 1"));
        }
        d.corpus_spec().map_err(|e| prefix_key(e, "data."))?;
        self.model.validate().map_err(|e| prefix_key(e, "model."))?;
        if self.model.encoder.nx != d.nx {
            return Err(Error::config(
                "model.encoder.nx",
                format!("encoder expects {} points per side but data.nx = {}", self.model.encoder.nx, d.nx),
            ));
        }
        self.train.validate()?;
        self.eval.integrator.validate()?;
        if let Some(t) = self.eval.threshold {
            if !(t > 0.0) {
                return Err(Error::config("eval.threshold", "must be > 0"));
            }
        }
        if self.eval.predict_resolution == Some(0) {
            return Err(Error::config("eval.predict_resolution", "must be >= 1"));
        }
        if self.sweep.lambdas.is_empty() {
            return Err(Error::config("sweep.lambdas", "needs at least one value"));
        }
        if let Some(bad) = self.sweep.lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::config("sweep.lambdas", format!("values must be >= 0, got {bad}")));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes to TOML")
    }
}

fn read_table(path: &Path, key: &str) -> Result<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(key, format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| Error::config(key, format!("{}: {e}", path.display())))
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(a)), Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// Parses `a.b.c=value`; the value is read as a TOML literal, falling back to a string.
pub fn parse_override(spec: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::config(key, "empty key segment"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((path, value))
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty key path");
    let mut cur = table;
    for (i, seg) in parents.iter().enumerate() {
        let entry = cur.entry(seg.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::config(path[..=i].join("."), "is not a section")),
        };
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// First key of `given` (dotted) that has no counterpart in `known`.
fn unknown_key(given: &Table, known: &Table, prefix: &str) -> Option<String> {
    for (k, v) in given {
        let path = format!("{prefix}{k}");
        match (v, known.get(k)) {
            (_, None) => return Some(path),
            (Value::Table(g), Some(Value::Table(n))) => {
                if let Some(p) = unknown_key(g, n, &format!("{path}.")) {
                    return Some(p);
                }
            }
            _ => {}
        }
    }
    None
}

fn deserialize(table: &Table, origin: &str) -> Result<RunConfig> {
    let cfg: RunConfig = Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(origin, e.message().trim().to_string()))?;
    if let Some(key) = unknown_key(table, &to_table(&cfg), "") {
        return Err(Error::config(key, "unknown configuration key"));
    }
    Ok(cfg)
}

/// Merges `base` (a stored run config), `file`, and `overrides` over the
/// defaults, in that order, then validates the result.
pub fn resolve(base: Option<&Path>, file: Option<&Path>, overrides: &[String]) -> Result<ResolvedConfig> {
    let mut table = to_table(&RunConfig::default());
    if let Some(p) = base {
        let origin = p.display().to_string();
        merge(&mut table, read_table(p, &origin)?);
        deserialize(&table, &origin)?;
    }
    if let Some(p) = file {
        merge(&mut table, read_table(p, "--config")?);
        deserialize(&table, &p.display().to_string())?;
    }
    for o in overrides {
        let (path, value) = parse_override(o)?;
        set_path(&mut table, &path, value)?;
        deserialize(&table, &path.join("."))?;
    }
    let config = deserialize(&table, "config")?;
    config.validate()?;
    Ok(ResolvedConfig {
        config,
        provenance: Provenance {
            base: base.map(Path::to_path_buf),
            file: file.map(Path::to_path_buf),
            overrides: overrides.to_vec(),
        },
    })
}
