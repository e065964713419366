use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance of an output directory: which config produced it, the seeds
/// used, and a checksum for every emitted file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Core(proadapt_core::Error::Parse(format!("{}: {e}", path.display()))))
    }

    /// The existing manifest in `dir` (files kept) stamped with `config`.
    pub fn open(dir: &Path, config: &PipelineConfig) -> Result<Self> {
        let mut m = Self::load(dir)?.unwrap_or_default();
        m.tool_version = env!("CARGO_PKG_VERSION").to_string();
        m.config_hash = config.hash();
        m.seeds.insert("master".into(), config.master_seed);
        if matches!(config.source, crate::config::DataSource::Simulate) {
            m.seeds.insert("simulate".into(), config.sim.seed);
        }
        Ok(m)
    }

    pub fn record(&mut self, dir: &Path, name: &str) -> Result<()> {
        let sum = sha256_file(&dir.join(name))?;
        self.files.insert(name.to_string(), sum);
        Ok(())
    }

    /// Fail unless `name` exists and matches its recorded checksum.
    pub fn verify(&self, dir: &Path, name: &str, producer: &'static str) -> Result<()> {
        let path = dir.join(name);
        let missing = || CliError::MissingIntermediate {
            file: name.to_string(),
            command: producer,
        };
        if !path.exists() {
            return Err(missing());
        }
        let expected = self.files.get(name).ok_or_else(missing)?;
        if &sha256_file(&path)? != expected {
            return Err(CliError::Stale { file: name.to_string() });
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tampered_file_is_stale() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n1\n").unwrap();
        let mut m = RunManifest::open(dir.path(), &PipelineConfig::default()).unwrap();
        m.record(dir.path(), "a.csv").unwrap();
        m.save(dir.path()).unwrap();
        let m = RunManifest::load(dir.path()).unwrap().unwrap();
        m.verify(dir.path(), "a.csv", "simulate").unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n2\n").unwrap();
        let err = m.verify(dir.path(), "a.csv", "simulate").unwrap_err();
        assert!(err.to_string().contains("intermediates modified"));
        let err = m.verify(dir.path(), "b.csv", "train").unwrap_err();
        assert!(err.to_string().contains("proadapt train"));
    }
}
