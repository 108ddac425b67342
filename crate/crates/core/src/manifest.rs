//! Reproducibility envelope attached to every artifact a command writes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// All inputs that influence a run's numbers, plus bookkeeping that does not
/// (`wall_time_secs`, `threads`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub dataset_sha256: String,
    pub variant: String,
    pub m_variant: String,
    pub layers: usize,
    pub fdim: usize,
    pub t_slots: usize,
    pub bandwidth: usize,
    pub lr: f64,
    pub l2: f64,
    pub beta: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub init_seed: u64,
    pub split_seed: u64,
    pub aggregator: String,
    pub split_policy: String,
    pub epoch_semantics: String,
    pub extra: Vec<(String, String)>,
    pub threads: usize,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// True when both manifests describe the same computation.
    pub fn same_inputs(&self, other: &RunManifest) -> bool {
        let strip = |m: &RunManifest| RunManifest {
            wall_time_secs: 0.0,
            threads: 0,
            ..m.clone()
        };
        strip(self) == strip(other)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}
