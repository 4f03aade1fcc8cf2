//! Epoch loop, evaluation, metrics files and the synthetic corpus.

mod metrics;
mod predict;
mod run;
mod source;
mod synth;
mod trainer;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassSubset, DatasetError, SplitMode};
use crate::dsp::AugmentConfig;
use crate::features::FeatureError;
use crate::nn::{AdamConfig, CheckpointError, NnError};

pub use metrics::{read_history_csv, write_history_csv, ConfusionMatrix, EvalReport};
pub use predict::{predict, Prediction};
pub use run::{eval_run, train_run, EvalScope, RunOutcome, BEST_CHECKPOINT_FILE, CHECKPOINT_FILE};
pub use source::FeatureSource;
pub use synth::{make_synthetic_corpus, synth_class_ids, synth_frequency_hz, SynthSpec};
pub use trainer::{evaluate, partition, train, Trainer};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("class subset mismatch: model trained on {model}, requested {requested}")]
    SubsetMismatch { model: String, requested: String },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" | "single" => Ok(Precision::F32),
            "f64" | "double" => Ok(Precision::F64),
            _ => Err(format!("unknown precision {s:?}; expected f32 or f64")),
        }
    }
}

/// How the training-accuracy column of the history is produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainAccuracyMode {
    /// From the train-mode forward passes of the epoch.
    #[default]
    Running,
    /// A separate eval-mode pass over the un-augmented training set.
    EvalPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of each class sent to the training partition.
    pub split_ratio: f64,
    pub classes: ClassSubset,
    pub split: SplitMode,
    pub precision: Precision,
    /// `paper` or `scaled:<divisor>`.
    pub architecture: String,
    pub optimizer: AdamConfig,
    pub augment: AugmentConfig,
    /// Evaluate on the test partition every this many epochs (0 = only at the end).
    pub eval_interval: usize,
    pub train_accuracy: TrainAccuracyMode,
    /// Also save the checkpoint with the best test accuracy.
    pub keep_best: bool,
    /// Keep un-augmented features in memory between epochs.
    pub cache_in_memory: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            seed: 0,
            split_ratio: 0.8,
            classes: ClassSubset::av7(),
            split: SplitMode::RandomStratified,
            precision: Precision::F32,
            architecture: "paper".into(),
            optimizer: AdamConfig::default(),
            augment: AugmentConfig::default(),
            eval_interval: 1,
            train_accuracy: TrainAccuracyMode::Running,
            keep_best: false,
            cache_in_memory: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(TrainError::Config(format!("split_ratio {} must lie strictly between 0 and 1", self.split_ratio)));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(TrainError::Config(format!("learning rate {} must be positive", self.optimizer.lr)));
        }
        self.augment.validate().map_err(TrainError::Config)
    }
}

/// One row of `history.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}
