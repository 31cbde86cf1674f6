//! Experiment configuration: a preset name, a JSON override tree and the
//! master seed.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: String,
    /// Partial parameter tree merged over the preset defaults.
    #[serde(default)]
    pub overrides: Value,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn new(preset: &str) -> Self {
        Self {
            preset: preset.to_string(),
            overrides: Value::Object(Map::new()),
            master_seed: 0,
            replicates: None,
            output_dir: default_out(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Record `key=value` where `key` is a dotted path. The value is parsed
    /// as JSON when possible and kept as a string otherwise.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("expected key=value, got {assignment:?}")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        if !self.overrides.is_object() {
            self.overrides = Value::Object(Map::new());
        }
        let mut node = &mut self.overrides;
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(HarnessError::Config(format!("bad key {key:?}")));
        }
        for p in &parts[..parts.len() - 1] {
            let map = node.as_object_mut().unwrap();
            node = map.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
            if !node.is_object() {
                *node = Value::Object(Map::new());
            }
        }
        node.as_object_mut().unwrap().insert(parts[parts.len() - 1].to_string(), value);
        Ok(())
    }
}

/// Merge `overrides` into `base`. Every override path must already exist in
/// `base`, so misspelled keys are rejected.
pub fn merge(base: &mut Value, overrides: &Value, path: &str) -> Result<()> {
    match overrides {
        Value::Null => Ok(()),
        Value::Object(o) => {
            let b = base
                .as_object_mut()
                .ok_or_else(|| HarnessError::Config(format!("{path} is not a table")))?;
            for (k, v) in o {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let slot = b
                    .get_mut(k)
                    .ok_or_else(|| HarnessError::Config(format!("unknown parameter {here}")))?;
                if v.is_object() && slot.is_object() {
                    merge(slot, v, &here)?;
                } else {
                    *slot = v.clone();
                }
            }
            Ok(())
        }
        _ => Err(HarnessError::Config("overrides must be a JSON object".into())),
    }
}

/// Hex SHA-256 of the compact JSON text.
pub fn config_hash(v: &Value) -> String {
    let digest = Sha256::digest(serde_json::to_string(v).unwrap().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
