use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;

/// Provenance written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Every config key with the value the run used.
    pub config: BTreeMap<String, String>,
    /// Evaluation results keyed by dataset or sweep row.
    pub reports: BTreeMap<String, EvalReport>,
    pub wall_clock_secs: f64,
}

impl ExperimentRecord {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config: cfg.snapshot(),
            reports: BTreeMap::new(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Contract(format!("bad record: {e}")))
    }

    /// `<dir>/<command>.record.json`
    pub fn path_in(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.record.json", self.command))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = self.path_in(dir);
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The configuration the run used.
    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::from_snapshot(&self.config)
    }
}
