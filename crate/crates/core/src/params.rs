//! Name + parameter tables used to select built-in fields and kernels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    List(Vec<f64>),
}

/// A parameter table. `path` is the config key path used in diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(pub BTreeMap<String, ParamValue>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: ParamValue) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    pub fn with_f64(self, key: &str, value: f64) -> Self {
        self.with(key, ParamValue::Float(value))
    }

    pub fn with_list(self, key: &str, value: Vec<f64>) -> Self {
        self.with(key, ParamValue::List(value))
    }

    /// Rejects any key not listed in `known`.
    pub fn check_known(&self, known: &[&str], path: &str) -> Result<()> {
        for key in self.0.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::config(
                    format!("{path}.{key}"),
                    format!("unknown parameter (expected one of: {})", known.join(", ")),
                ));
            }
        }
        Ok(())
    }

    pub fn f64_or(&self, key: &str, default: f64, path: &str) -> Result<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(ParamValue::Float(v)) => Ok(*v),
            Some(ParamValue::Int(v)) => Ok(*v as f64),
            Some(_) => Err(Error::config(format!("{path}.{key}"), "expected a number")),
        }
    }

    pub fn opt_f64(&self, key: &str, path: &str) -> Result<Option<f64>> {
        if self.0.contains_key(key) {
            self.f64_or(key, 0.0, path).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn usize_or(&self, key: &str, default: usize, path: &str) -> Result<usize> {
        match self.0.get(key) {
            None => Ok(default),
            Some(ParamValue::Int(v)) if *v >= 0 => Ok(*v as usize),
            Some(_) => Err(Error::config(
                format!("{path}.{key}"),
                "expected a non-negative integer",
            )),
        }
    }

    pub fn list(&self, key: &str, path: &str) -> Result<Option<Vec<f64>>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(ParamValue::List(v)) => Ok(Some(v.clone())),
            Some(_) => Err(Error::config(
                format!("{path}.{key}"),
                "expected a list of numbers",
            )),
        }
    }
}
