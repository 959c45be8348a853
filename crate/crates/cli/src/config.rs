//! JSON run configuration merged with command-line overrides.
//!
//! A config file holds global keys plus one optional object per command:
//!
//! ```json
//! { "seed": 7, "format": "csv", "output_dir": "out",
//!   "sweep": { "m_s": 0.94, "points": 11 } }
//! ```
//!
//! Flags given on the command line replace the matching keys of the
//! command's section. Unknown keys are rejected at both levels.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub output_dir: Option<PathBuf>,
    pub model: Option<Value>,
    pub overlap: Option<Value>,
    pub mix: Option<Value>,
    pub sweep: Option<Value>,
    pub slope: Option<Value>,
    pub extract: Option<Value>,
    pub fit: Option<Value>,
    pub oracle: Option<Value>,
    pub analyze: Option<Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    pub fn section(&self, command: &str) -> Option<&Value> {
        match command {
            "model" => self.model.as_ref(),
            "overlap" => self.overlap.as_ref(),
            "mix" => self.mix.as_ref(),
            "sweep" => self.sweep.as_ref(),
            "slope" => self.slope.as_ref(),
            "extract" => self.extract.as_ref(),
            "fit" => self.fit.as_ref(),
            "oracle" => self.oracle.as_ref(),
            "analyze" => self.analyze.as_ref(),
            _ => None,
        }
    }
}

/// Overlays the non-null fields of `flags` on the config `section` and
/// deserializes the result.
pub fn merge<T>(section: Option<&Value>, flags: &T) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
{
    let mut merged = match section {
        None => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => {
            return Err(CliError::validation(
                "command section must be a JSON object",
            ))
        }
    };
    let overrides =
        serde_json::to_value(flags).map_err(|e| CliError::validation(format!("flags: {e}")))?;
    if let Value::Object(m) = overrides {
        for (k, v) in m {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::validation(format!("config: {e}")))
}
