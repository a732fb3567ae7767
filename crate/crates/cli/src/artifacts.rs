//! Output directory bookkeeping. Every file written through [`Artifacts`] is
//! listed in `manifest.json` with its SHA-256; JSON artifacts also embed the
//! scenario hash and seed directly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    scenario_hash: String,
    seed: u64,
    mode: String,
    entries: Vec<ManifestEntry>,
}

impl Artifacts {
    pub fn create(dir: &Path, scenario_hash: &str, seed: u64, mode: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            scenario_hash: scenario_hash.to_owned(),
            seed,
            mode: mode.to_owned(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn scenario_hash(&self) -> &str {
        &self.scenario_hash
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.record(name, bytes);
        Ok(path)
    }

    /// Write `payload` (a JSON object) with `scenario_hash`, `seed` and
    /// `mode` prepended.
    pub fn write_json(&mut self, name: &str, payload: Value) -> Result<PathBuf, CliError> {
        let mut doc = json!({
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "mode": self.mode,
        });
        if let (Some(out), Value::Object(extra)) = (doc.as_object_mut(), payload) {
            out.extend(extra);
        }
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Register a file written by someone else.
    pub fn adopt(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path)?;
        let name = path
            .strip_prefix(&self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        self.record(&name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.entries.retain(|e| e.path != name);
        self.entries.push(ManifestEntry {
            path: name.to_owned(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    /// Write `manifest.json` and return the listed entries.
    pub fn finish(mut self) -> Result<Vec<ManifestEntry>, CliError> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let doc = json!({
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "mode": self.mode,
            "files": self.entries,
        });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(self.entries)
    }
}
