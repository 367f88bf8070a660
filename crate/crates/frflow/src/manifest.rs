//! Run manifests: everything needed to repeat a command.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::table::write_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub command: String,
    /// Instance file path, or `bundled:<name>`.
    pub instance: Option<String>,
    /// Effective settings as `flag = value`, defaults included.
    pub config: serde_json::Map<String, serde_json::Value>,
    pub output_dir: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

impl ExperimentManifest {
    pub fn new(command: &str, instance: Option<String>, output_dir: &Path) -> Self {
        Self {
            command: command.to_owned(),
            instance,
            config: serde_json::Map::new(),
            output_dir: output_dir.display().to_string(),
            seeds: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<serde_json::Value>) -> &mut Self {
        self.config.insert(key.to_owned(), value.into());
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest is plain data") + "\n";
        write_file(path, &text)
    }
}
