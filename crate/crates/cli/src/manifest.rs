//! Per-run manifest, written once when a subcommand finishes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Version of every CSV layout this tool writes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub fn code_version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("MORPHCRITIC_GIT_REV"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Display name, e.g. `FiLMCritic`.
    pub variant: String,
    /// Command-line tag, e.g. `film`.
    pub variant_tag: String,
    pub seed: u64,
    pub dir: String,
    pub checkpoints: Vec<String>,
    pub env_steps: u64,
    pub wall_time_s: f64,
    pub failed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub csv_schema_version: u32,
    pub command: String,
    pub code_version: String,
    pub config_file: String,
    /// Snapshot that reloads to the same configuration.
    pub config_snapshot: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub reward_hash: String,
    pub curriculum_hash: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    /// Every file under the output directory, relative, sorted.
    pub outputs: Vec<String>,
    pub started_unix_s: u64,
    pub wall_time_s: f64,
    pub failed: bool,
    pub error: Option<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Relative paths of all files below `root`, sorted.
pub fn inventory(root: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| CliError::io(dir, e))?;
            let p = entry.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else if let Ok(rel) = p.strip_prefix(root) {
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if root.is_dir() {
        walk(root, root, &mut out)?;
    }
    out.retain(|f| f != MANIFEST_FILE);
    out.sort();
    Ok(out)
}

/// Write through a temporary file and rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp: PathBuf = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

impl RunManifest {
    pub fn write(&mut self, out_dir: &Path) -> Result<()> {
        self.outputs = inventory(out_dir)?;
        let json = serde_json::to_vec_pretty(self).map_err(|e| CliError::Invalid(e.to_string()))?;
        write_atomic(&out_dir.join(MANIFEST_FILE), &json)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::config(path, e))
    }
}
