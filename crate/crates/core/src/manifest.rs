//! Run metadata written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::digest_file;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Parameters that shape a run's results.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_flow: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
}

/// Inputs, configuration, timings and output digests of one command run.
///
/// Timings vary between runs, so the manifest itself is not listed among
/// the digested outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<FileDigest>,
    pub config: RunConfig,
    pub timings_ms: BTreeMap<String, f64>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            inputs: Vec::new(),
            config: RunConfig::default(),
            timings_ms: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let sha256 = digest_file(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn set_outputs(&mut self, digests: Vec<(String, String)>) {
        self.outputs = digests
            .into_iter()
            .map(|(path, sha256)| FileDigest { path, sha256 })
            .collect();
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let value = f();
        self.timings_ms
            .insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        value
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes =
            serde_json::to_vec_pretty(self).map_err(|e| Error::Serialize(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Serialize(e.to_string()))
    }
}
