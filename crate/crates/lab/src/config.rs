//! Flat `key = value` experiment configs.
//!
//! A config is a TOML document without tables. `experiment` and `seed` are
//! required, `output` names the run directory, and every other key must be
//! one of the documented keys of the experiment. Missing keys take their
//! documented defaults. The canonical text lists every resolved key in
//! sorted order, one `key = value` line each, without `output`; the config
//! hash is the SHA-256 of that text.

use crate::error::{config_err, Result};
use crate::experiments::Experiment;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use toml::Value;

/// A documented parameter: name, default as a TOML literal (`None` for
/// optional keys without a default) and a one-line description.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub doc: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, doc: &'static str) -> Key {
    Key { name, default: Some(default), doc }
}

pub const fn optional(name: &'static str, doc: &'static str) -> Key {
    Key { name, default: None, doc }
}

const RESERVED: [&str; 3] = ["experiment", "seed", "output"];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub experiment: Experiment,
    pub seed: u64,
    pub output: Option<String>,
    params: BTreeMap<String, Value>,
}

fn parse_literal(text: &str) -> Value {
    let doc: toml::Table = toml::from_str(&format!("v = {text}")).expect("documented defaults are valid TOML");
    doc["v"].clone()
}

/// Integers given for float keys (or float lists) are stored as floats, so
/// `t = 4` and `t = 4.0` hash alike.
fn widen(default: &Value, given: Value) -> Value {
    let float_list = |d: &Value| matches!(d, Value::Array(items) if items.first().is_some_and(|v| v.is_float()));
    match given {
        Value::Integer(i) if default.is_float() => Value::Float(i as f64),
        Value::Array(items) if float_list(default) => Value::Array(
            items.into_iter().map(|v| if let Value::Integer(i) = v { Value::Float(i as f64) } else { v }).collect(),
        ),
        v => v,
    }
}

fn same_kind(default: &Value, given: &Value) -> bool {
    match (default, given) {
        (Value::Float(_), Value::Float(_) | Value::Integer(_)) => true,
        (Value::Array(_), Value::Array(items)) => {
            items.iter().all(|v| matches!(v, Value::Integer(_) | Value::Float(_) | Value::String(_)))
        }
        (a, b) => std::mem::discriminant(a) == std::mem::discriminant(b),
    }
}

impl Config {
    /// Default config of `experiment` with master seed `seed`.
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        let params = experiment
            .keys()
            .iter()
            .filter_map(|k| k.default.map(|d| (k.name.to_string(), parse_literal(d))))
            .collect();
        Config { experiment, seed, output: None, params }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text)?;
        let experiment = match table.get("experiment") {
            Some(Value::String(name)) => Experiment::from_name(name)?,
            Some(_) => return config_err("`experiment` must be a string"),
            None => return config_err("missing `experiment`"),
        };
        let seed = match table.get("seed") {
            Some(Value::Integer(s)) if *s >= 0 => *s as u64,
            Some(_) => return config_err("`seed` must be a non-negative integer"),
            None => return config_err("missing `seed`"),
        };
        let mut config = Config::new(experiment, seed);
        config.output = match table.get("output") {
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return config_err("`output` must be a string"),
            None => None,
        };
        for (name, value) in &table {
            if RESERVED.contains(&name.as_str()) {
                continue;
            }
            config.set(name, value.clone())?;
        }
        Ok(config)
    }

    /// Overrides one documented key.
    pub fn set(&mut self, name: &str, value: Value) -> Result<()> {
        let Some(k) = self.experiment.keys().iter().find(|k| k.name == name) else {
            let known: Vec<&str> = self.experiment.keys().iter().map(|k| k.name).collect();
            return config_err(format!(
                "unknown key `{name}` for experiment {}; known keys: {}",
                self.experiment.name(),
                known.join(", ")
            ));
        };
        if matches!(value, Value::Table(_)) {
            return config_err(format!("`{name}`: nested tables are not allowed"));
        }
        if name.ends_with("_file") {
            match &value {
                Value::String(path) if std::path::Path::new(path).is_file() => {}
                Value::String(path) => return config_err(format!("`{name}`: no such file {path}")),
                v => return config_err(format!("`{name}` = {v} is not a path")),
            }
        }
        let value = match k.default {
            Some(d) => {
                let default = parse_literal(d);
                if !same_kind(&default, &value) {
                    return config_err(format!("`{name}` = {value} has the wrong type (default {d})"));
                }
                widen(&default, value)
            }
            None => value,
        };
        self.params.insert(name.to_string(), value);
        Ok(())
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Result<Self> {
        self.set(name, value.into())?;
        Ok(self)
    }

    pub fn canonical_text(&self) -> String {
        let mut all = self.params.clone();
        all.insert("experiment".into(), Value::String(self.experiment.name().into()));
        all.insert("seed".into(), Value::Integer(self.seed as i64));
        all.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }

    fn get(&self, name: &str) -> Result<&Value> {
        self.params.get(name).ok_or_else(|| crate::Error::Config(format!("missing value for `{name}`")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn f64(&self, name: &str) -> Result<f64> {
        match self.get(name)? {
            Value::Float(v) => Ok(*v),
            Value::Integer(v) => Ok(*v as f64),
            v => config_err(format!("`{name}` = {v} is not a number")),
        }
    }

    pub fn i64(&self, name: &str) -> Result<i64> {
        match self.get(name)? {
            Value::Integer(v) => Ok(*v),
            v => config_err(format!("`{name}` = {v} is not an integer")),
        }
    }

    pub fn u64(&self, name: &str) -> Result<u64> {
        match self.i64(name)? {
            v if v >= 0 => Ok(v as u64),
            v => config_err(format!("`{name}` = {v} must be >= 0")),
        }
    }

    pub fn usize(&self, name: &str) -> Result<usize> {
        Ok(self.u64(name)? as usize)
    }

    pub fn string(&self, name: &str) -> Result<String> {
        match self.get(name)? {
            Value::String(s) => Ok(s.clone()),
            v => config_err(format!("`{name}` = {v} is not a string")),
        }
    }

    pub fn opt_string(&self, name: &str) -> Result<Option<String>> {
        if self.has(name) {
            self.string(name).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn f64_list(&self, name: &str) -> Result<Vec<f64>> {
        match self.get(name)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(x) => Ok(*x as f64),
                    v => config_err(format!("`{name}` entry {v} is not a number")),
                })
                .collect(),
            v => config_err(format!("`{name}` = {v} is not a list")),
        }
    }

    pub fn u64_list(&self, name: &str) -> Result<Vec<u64>> {
        match self.get(name)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(x) if *x >= 0 => Ok(*x as u64),
                    v => config_err(format!("`{name}` entry {v} is not a non-negative integer")),
                })
                .collect(),
            v => config_err(format!("`{name}` = {v} is not a list")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_order_output_and_spelled_out_defaults() {
        let a = Config::parse("experiment = \"duality\"\nseed = 3\nt = 4.0\n").unwrap();
        let b = Config::parse("t = 4\nseed = 3\noutput = \"x\"\nexperiment = \"duality\"\n").unwrap();
        let c = Config::parse("experiment = \"duality\"\nseed = 3\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
        let d = Config::parse("experiment = \"duality\"\nseed = 4\n").unwrap();
        assert_ne!(a.hash(), d.hash());
        let e = Config::parse("experiment = \"duality\"\nseed = 3\nt = 3.5\n").unwrap();
        assert_ne!(a.hash(), e.hash());
    }

    #[test]
    fn canonical_text_is_sorted_key_value_lines() {
        let c = Config::parse("experiment = \"duality\"\nseed = 1\n").unwrap();
        let text = c.canonical_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(text.contains("experiment = \"duality\"\n"));
        assert!(text.contains("seed = 1\n"));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(Config::parse("experiment = \"nope\"\nseed = 1\n"), Err(crate::Error::UnknownExperiment(_))));
        assert!(Config::parse("experiment = \"duality\"\nseed = 1\nbogus = 2\n").is_err());
        assert!(Config::parse("experiment = \"duality\"\nseed = 1\nt = \"four\"\n").is_err());
        assert!(Config::parse("experiment = \"duality\"\n").is_err());
        assert!(Config::parse("seed = 1\n").is_err());
        assert!(Config::parse("experiment = \"duality\"\nseed = -1\n").is_err());
        assert!(Config::parse("experiment = \"duality\"\nseed = 1\n[t]\nx = 1\n").is_err());
    }

    #[test]
    fn integers_widen_to_floats() {
        let c = Config::parse("experiment = \"duality\"\nseed = 1\nt = 3\n").unwrap();
        assert_eq!(c.f64("t").unwrap(), 3.0);
    }
}
