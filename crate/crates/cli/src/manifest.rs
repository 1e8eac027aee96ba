use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one run: enough to repeat it and to locate its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments after the program name, `--out` excluded.
    pub args: Vec<String>,
    pub scenario_hash: String,
    pub solver: serde_json::Value,
    pub code_version: String,
    pub wall_time_s: f64,
    /// Output files relative to the output directory.
    pub outputs: Vec<String>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl RunManifest {
    /// Checks that every listed output exists and is non-empty, then writes
    /// the manifest next to them.
    pub fn write(&self, out: &Path) -> Result<()> {
        for f in &self.outputs {
            let len = fs::metadata(out.join(f)).with_context(|| format!("output `{f}` missing"))?.len();
            if len == 0 {
                bail!("output `{f}` is empty");
            }
        }
        let text = serde_json::to_string_pretty(self)?;
        fs::write(out.join(MANIFEST_FILE), text + "\n").context("writing manifest")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))
    }
}
