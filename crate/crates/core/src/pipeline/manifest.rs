//! Record of stage inputs and outputs with content hashes.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::table::{file_hash, read_text, write_text};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    /// Relative path to sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; excluded from comparisons.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load_or_new(dir: &Path, config_hash: &str, seed: u64) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let mut m = if path.exists() {
            serde_json::from_str(&read_text(&path)?)?
        } else {
            RunManifest::default()
        };
        m.version = env!("CARGO_PKG_VERSION").to_string();
        m.config_hash = config_hash.to_string();
        m.seed = seed;
        Ok(m)
    }

    /// Hashes the given files (paths relative to `dir`) and stores them
    /// under `stage`.
    pub fn record(&mut self, dir: &Path, stage: &str, seed: u64, inputs: &[String], outputs: &[String]) -> Result<()> {
        let hash_all = |names: &[String]| -> Result<BTreeMap<String, String>> {
            names.iter().map(|n| Ok((n.clone(), file_hash(&dir.join(n))?))).collect()
        };
        let rec = StageRecord {
            seed,
            inputs: hash_all(inputs)?,
            outputs: hash_all(outputs)?,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        self.stages.insert(stage.to_string(), rec);
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(self)?)
    }

    /// Copy with timestamps cleared, for reproducibility checks.
    pub fn without_timestamps(&self) -> Self {
        let mut m = self.clone();
        for s in m.stages.values_mut() {
            s.timestamp = 0;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_hashes_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "1\n").unwrap();
        std::fs::write(dir.path().join("b.txt"), "2\n").unwrap();
        let mut m = RunManifest::load_or_new(dir.path(), "cfg", 3).unwrap();
        m.record(dir.path(), "s", 3, &["a.txt".into()], &["b.txt".into()]).unwrap();
        m.save(dir.path()).unwrap();
        let back = RunManifest::load_or_new(dir.path(), "cfg", 3).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.stages["s"].outputs["b.txt"], file_hash(&dir.path().join("b.txt")).unwrap());
        assert!(m.record(dir.path(), "s", 3, &["missing".into()], &[]).is_err());
    }
}
