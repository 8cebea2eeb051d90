//! Optional TOML defaults, e.g.
//!
//! ```toml
//! gap = 0.01
//! time_limit_ms = 5000
//! port = 9000
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub gap: Option<f64>,
    pub time_limit_ms: Option<u64>,
    pub port: Option<u16>,
    pub ndjson_port: Option<u16>,
    pub assets: Option<PathBuf>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, String> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
