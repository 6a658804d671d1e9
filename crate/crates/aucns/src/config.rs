use std::path::{Path, PathBuf};

use aucns_core::train::TrainConfig;
use aucns_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::DatasetFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub format: DatasetFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: f64,
    #[serde(default = "default_hot_quantile")]
    pub hot_quantile: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
    /// Cut-offs for the ranking metrics.
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    /// FPR bound of the reported partial AUC; `null` skips it.
    #[serde(default = "default_pauc_gamma")]
    pub pauc_gamma: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_split_ratio() -> f64 {
    0.8
}

fn default_hot_quantile() -> f64 {
    0.15
}

fn default_k() -> Vec<usize> {
    vec![5, 10, 20]
}

fn default_pauc_gamma() -> Option<f64> {
    Some(0.006)
}

impl ExperimentConfig {
    /// Defaults for a dataset file.
    pub fn new(path: impl Into<PathBuf>, format: DatasetFormat) -> Self {
        ExperimentConfig {
            dataset: DatasetConfig { path: path.into(), format },
            split_ratio: default_split_ratio(),
            hot_quantile: default_hot_quantile(),
            seed: 0,
            train: TrainConfig::default(),
            k: default_k(),
            pauc_gamma: default_pauc_gamma(),
            output_dir: None,
        }
    }

    /// Parses JSON; a relative dataset path is resolved against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text)?;
        if let Some(base) = base {
            if cfg.dataset.path.is_relative() {
                cfg.dataset.path = base.join(&cfg.dataset.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(CoreError::config("split_ratio", "must be in (0, 1)").into());
        }
        if !(self.hot_quantile > 0.0 && self.hot_quantile < 1.0) {
            return Err(CoreError::config("hot_quantile", "must be in (0, 1)").into());
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(CoreError::config("k", "must list at least one positive cut-off").into());
        }
        if let Some(g) = self.pauc_gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(CoreError::config("pauc_gamma", "must be in (0, 1]").into());
            }
        }
        Ok(self.train_config().validate()?)
    }

    /// The training config with the experiment seed filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    /// SHA-256 of the canonical JSON form. The output directory is excluded
    /// so that moving a run does not change its identity.
    pub fn hash(&self) -> [u8; 32] {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
