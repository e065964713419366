use std::path::{Path, PathBuf};

use proadapt_core::eval::ForecastMode;
use proadapt_core::seed::sub_seed;
use proadapt_core::{IngestSchema, SearchSpace, SimConfig, SplineSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Simulate,
    Csv {
        path: PathBuf,
        schema: IngestSchema,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: DataSource,
    pub sim: SimConfig,
    /// Overrides the split seeds otherwise derived from `master_seed`.
    pub split_seed: Option<u64>,
    pub replicas: usize,
    pub search: SearchSpace,
    pub tune_budget: usize,
    /// Batch whose validation set scores the trials.
    pub tune_batch: usize,
    /// Re-tune at every batch instead of once.
    pub tune_per_horizon: bool,
    pub candidates: Vec<SplineSpec>,
    pub forecast_mode: ForecastMode,
    pub deltas: Vec<usize>,
    pub threshold: f64,
    pub ci_level: f64,
    pub bins: usize,
    pub igt_dims: usize,
    /// Feature column summarised by the characterization stage.
    pub characterize_feature: usize,
    pub export_splits: bool,
    pub out_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Simulate,
            sim: SimConfig::default(),
            split_seed: None,
            replicas: 100,
            search: SearchSpace::default(),
            tune_budget: 20,
            tune_batch: 0,
            tune_per_horizon: false,
            candidates: SplineSpec::default_candidates(),
            forecast_mode: ForecastMode::PerReplica,
            deltas: vec![2, 4],
            threshold: 0.5,
            ci_level: 0.95,
            bins: 50,
            igt_dims: 2,
            characterize_feature: 0,
            export_splits: false,
            out_dir: PathBuf::from("out"),
            master_seed: 42,
        }
    }
}

impl PipelineConfig {
    /// Read TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::config(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        match &self.source {
            DataSource::Simulate => self.sim.validate()?,
            DataSource::Csv { schema, .. } => schema.validate()?,
        }
        self.search.validate()?;
        if self.replicas < 2 {
            return Err(CliError::config("replicas", "need at least 2 for an interval"));
        }
        if self.tune_budget == 0 {
            return Err(CliError::config("tune_budget", "must be at least 1"));
        }
        if self.candidates.is_empty() {
            return Err(CliError::config("candidates", "must not be empty"));
        }
        for c in &self.candidates {
            c.validate()?;
        }
        if self.deltas.is_empty() {
            return Err(CliError::config("deltas", "must not be empty"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CliError::config("threshold", "must lie in (0,1)"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(CliError::config("ci_level", "must lie in (0,1)"));
        }
        if self.bins == 0 {
            return Err(CliError::config("bins", "must be at least 1"));
        }
        if !(2..=3).contains(&self.igt_dims) {
            return Err(CliError::config("igt_dims", "must be 2 or 3"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn split_seed_for(&self, batch: usize) -> u64 {
        sub_seed(self.split_seed.unwrap_or(self.master_seed), "split", batch as u64)
    }

    pub fn tune_seed_for(&self, batch: usize) -> u64 {
        sub_seed(self.master_seed, "tune", batch as u64)
    }

    pub fn train_seed_for(&self, replica: usize) -> u64 {
        sub_seed(self.master_seed, "train", replica as u64)
    }
}
