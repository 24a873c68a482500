//! Output directories and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const OUT_ENV: &str = "BULKDIFF_OUT";
const DEFAULT_ROOT: &str = "bulkdiff-out";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub seeds: BTreeMap<String, u64>,
    pub workers: Option<usize>,
    pub alpha: Option<f64>,
    pub alpha_source: Option<String>,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the config bytes together with every option that changes results.
pub fn config_hash(config: &[u8], seed: Option<u64>, alpha: Option<f64>) -> String {
    let mut h = Sha256::new();
    h.update(config);
    h.update(format!("\nseed={seed:?}\nalpha={alpha:?}\n").as_bytes());
    hex::encode(h.finalize())
}

/// Per-task seed derived from the base seed and a task label.
pub fn task_seed(base: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn output_root(configured: Option<&Path>) -> PathBuf {
    if let Some(p) = configured {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_ROOT),
    }
}

/// A run directory `<root>/<command>-<hash prefix>` that records what is written to it.
pub struct RunDir {
    pub path: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    pub fn create(root: &Path, command: &str, hash: &str) -> Result<Self, CliError> {
        let path = root.join(format!("{command}-{}", &hash[..12]));
        std::fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self { path, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
        self.record(name, contents);
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        self.write(name, text.as_bytes())
    }

    /// Records a file written by someone else.
    pub fn adopt(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let rel = path.strip_prefix(&self.path).unwrap_or(path).to_string_lossy().replace('\\', "/");
        self.record(&rel, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, contents: &[u8]) {
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len() as u64,
        });
    }

    /// Writes `manifest.json`; the manifest is not part of its own inventory.
    pub fn finish(self, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        manifest.files = self.files;
        let p = self.path.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        Ok(self.path)
    }
}
