//! One manifest per output directory, written before anything else.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::io::{read_json, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the compact JSON encoding of the run configuration.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub resumed_from: Option<PathBuf>,
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    hex::encode(Sha256::digest(bytes))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: config_hash(config),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: None,
            outputs: Vec::new(),
            resumed_from: None,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn record(&mut self, output: impl Into<String>) {
        let output = output.into();
        if !self.outputs.contains(&output) {
            self.outputs.push(output);
        }
    }

    pub fn finish(&mut self, dir: &Path) -> Result<()> {
        self.finished_at = Some(now());
        self.save(dir)
    }
}

/// Creates a fresh output directory; an existing non-empty one is an error.
pub fn create_output_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let empty = std::fs::read_dir(dir).map_err(LabError::io(dir))?.next().is_none();
        if !empty {
            return Err(LabError::RunExists(dir.into()));
        }
    }
    std::fs::create_dir_all(dir).map_err(LabError::io(dir))
}
