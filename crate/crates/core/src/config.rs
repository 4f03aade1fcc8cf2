//! The resolved configuration of a run, stored as TOML beside its outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::features::FeatureConfig;
use crate::train::TrainConfig;

pub const RUN_CONFIG_FILE: &str = "run_config.toml";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("cannot serialize run config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// Everything needed to reproduce a run. Every field has a default, so a
/// config file only needs the keys it changes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Corpus root (holding the metadata CSV and `fold*` directories).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// On-disk feature cache root.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub train: TrainConfig,
    pub features: FeatureConfig,
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: origin.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    /// Writes `run_config.toml` into `dir`.
    pub fn save_in(&self, dir: &Path) -> Result<PathBuf, ConfigError> {
        let path = dir.join(RUN_CONFIG_FILE);
        let io = |source| ConfigError::Io { path: path.clone(), source };
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(&path, self.to_toml()?).map_err(io)?;
        Ok(path)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassSubset, SplitMode};

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig { data_dir: Some("/data/us8k".into()), ..Default::default() };
        cfg.train.classes = ClassSubset::all10();
        cfg.train.split = SplitMode::FoldHoldout { test_folds: vec![10] };
        cfg.train.optimizer.lr = 3e-4;
        cfg.features.f_max_hz = Some(11025.0);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text, Path::new("x")).unwrap(), cfg);
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("", Path::new("x")).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.features.n_mels, 64);
    }

    #[test]
    fn partial_file_overrides() {
        let cfg = RunConfig::from_toml("[train]\nepochs = 3\nclasses = [1, 3]\n", Path::new("x")).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.classes.kept_class_ids(), &[1, 3]);
        assert!(RunConfig::from_toml("[train]\nclasses = [12]\n", Path::new("x")).is_err());
    }
}
