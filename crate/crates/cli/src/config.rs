//! Configuration files: a JSON object of command parameters, optionally
//! carrying `seed`, `workers` and `out` next to them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default)]
pub struct Envelope {
    pub params: Map<String, Value>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Envelope {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)?;
        let Value::Object(mut params) = value else {
            return Err(CliError::Config("config must be a JSON object".into()));
        };
        let seed = take(&mut params, "seed")?;
        let workers = take(&mut params, "workers")?;
        let out = take(&mut params, "out")?;
        Ok(Self {
            params,
            seed,
            workers,
            out,
        })
    }

    /// The command parameters, defaults filled in for missing keys.
    pub fn parse<T: DeserializeOwned>(&self) -> CliResult<T> {
        Ok(serde_json::from_value(Value::Object(self.params.clone()))?)
    }
}

fn take<T: DeserializeOwned>(params: &mut Map<String, Value>, key: &str) -> CliResult<Option<T>> {
    match params.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v)
            .map(Some)
            .map_err(|e| CliError::Config(format!("invalid `{key}`: {e}"))),
    }
}
