//! JSON run configuration: the pipeline settings plus `"schema_version": 1`
//! at the top level. Omitted fields take their defaults.

use std::fs;
use std::path::Path;

use serde_json::Value;
use vbcgcd_core::PipelineConfig;

use crate::error::{IoError, Result};

pub const CONFIG_SCHEMA_VERSION: u64 = 1;

pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| IoError::Config("expected a JSON object".into()))?;
    match obj.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(CONFIG_SCHEMA_VERSION) => {}
        Some(v) => return Err(IoError::Config(format!("unsupported schema_version {v}"))),
        None => return Err(IoError::Config("missing schema_version".into())),
    }
    let config: PipelineConfig = serde_json::from_value(value).map_err(|e| IoError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn config_to_json(config: &PipelineConfig) -> String {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let Value::Object(obj) = &mut value {
        obj.insert("schema_version".into(), CONFIG_SCHEMA_VERSION.into());
    }
    serde_json::to_string_pretty(&value).expect("config serializes")
}

/// Reads a config file. Any failure, including a missing file, is a
/// configuration error.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).map_err(|e| IoError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn save_config(config: &PipelineConfig, path: &Path) -> Result<()> {
    fs::write(path, config_to_json(config)).map_err(|e| IoError::io(path, e))
}
