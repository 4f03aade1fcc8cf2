use std::path::{Path, PathBuf};

use super::metrics::{write_history_csv, EvalReport};
use super::source::FeatureSource;
use super::trainer::{evaluate, partition, Trainer};
use super::{EpochRecord, TrainError};
use crate::config::{ConfigError, RunConfig};
use crate::dataset::{select_subset, ClassSubset, DatasetManifest};
use crate::nn::{save_checkpoint, Checkpoint, Model};
use crate::scalar::Scalar;

pub const CHECKPOINT_FILE: &str = "model.usnd";
pub const BEST_CHECKPOINT_FILE: &str = "best.usnd";

pub struct RunOutcome<T> {
    pub model: Model<T>,
    pub history: Vec<EpochRecord>,
    /// Final-model evaluation on the test partition, if it is non-empty.
    pub test_report: Option<EvalReport>,
    pub checkpoint: PathBuf,
    /// `(accuracy, epoch)` of the best checkpoint when `keep_best` is set.
    pub best: Option<(f64, usize)>,
}

impl From<ConfigError> for TrainError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { path, source } => TrainError::Io { path, source },
            other => TrainError::Config(other.to_string()),
        }
    }
}

/// Trains per `cfg` and writes `run_config.toml`, `history.csv` (updated
/// every epoch), the checkpoint and, when a test partition exists, the
/// confusion and per-class CSVs into `out_dir`.
pub fn train_run<T: Scalar>(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    out_dir: &Path,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunOutcome<T>, TrainError> {
    cfg.save_in(out_dir)?;
    let mut source = FeatureSource::<T>::new(cfg.features)?.with_memory_cache(cfg.train.cache_in_memory);
    if let Some(dir) = &cfg.cache_dir {
        source = source.with_disk_cache(dir.clone());
    }
    if cfg.train.augment.enabled {
        source.extractor().config().check_augment(&cfg.train.augment)?;
    }
    let mut trainer = Trainer::new(manifest, cfg.train.clone(), source)?;
    let history_path = out_dir.join("history.csv");
    while trainer.epochs_done() < cfg.train.epochs {
        let record = trainer.run_epoch()?;
        write_history_csv(&history_path, trainer.history())?;
        on_epoch(&record);
    }

    let test_report = trainer.evaluate_test()?;
    if let Some(report) = &test_report {
        report.confusion.write_all(out_dir)?;
    }
    let json = cfg.to_json();
    let seed = cfg.train.seed;
    let subset = trainer.subset().clone();
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, &Checkpoint::new(trainer.model().clone(), subset.clone(), seed, cfg.train.epochs, json.clone()))?;
    let best = trainer.best().map(|(acc, epoch, model)| (acc, epoch, model.clone()));
    if let Some((_, epoch, model)) = &best {
        save_checkpoint(&out_dir.join(BEST_CHECKPOINT_FILE), &Checkpoint::new(model.clone(), subset, seed, *epoch, json))?;
    }
    Ok(RunOutcome {
        history: trainer.history().to_vec(),
        model: trainer.into_model(),
        test_report,
        checkpoint,
        best: best.map(|(a, e, _)| (a, e)),
    })
}

/// Which entries [`eval_run`] scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalScope {
    /// The test partition recomputed from the checkpoint's training config.
    #[default]
    TestSplit,
    /// Every entry of the checkpoint's class subset.
    All,
}

/// Evaluates a checkpoint on `manifest` with the feature settings it was
/// trained with, writing the confusion CSVs and the resolved config into
/// `out_dir`. `requested` must match the checkpoint's class subset.
pub fn eval_run<T: Scalar>(
    checkpoint: &Checkpoint<T>,
    manifest: &DatasetManifest,
    requested: Option<&ClassSubset>,
    scope: EvalScope,
    cache_dir: Option<&Path>,
    out_dir: &Path,
) -> Result<EvalReport, TrainError> {
    let trained = &checkpoint.meta.classes;
    if let Some(req) = requested {
        if req != trained {
            return Err(TrainError::SubsetMismatch { model: trained.label(), requested: req.label() });
        }
    }
    let mut cfg: RunConfig = serde_json::from_value(checkpoint.meta.config.clone())
        .map_err(|e| TrainError::Config(format!("checkpoint carries an unreadable run config: {e}")))?;
    cfg.train.classes = trained.clone();
    cfg.data_dir = Some(manifest.root_path.clone());
    cfg.output_dir = Some(out_dir.to_path_buf());
    cfg.cache_dir = cache_dir.map(Path::to_path_buf);
    cfg.save_in(out_dir)?;

    let mut source = FeatureSource::<T>::new(cfg.features)?.with_memory_cache(false);
    if let Some(dir) = cache_dir {
        source = source.with_disk_cache(dir.to_path_buf());
    }
    let entries = match scope {
        EvalScope::TestSplit => {
            let (entries, _, split) = partition(manifest, &cfg.train)?;
            split.test_indices.iter().map(|&i| entries[i].clone()).collect()
        }
        EvalScope::All => select_subset(manifest, trained.kept_class_ids())?.0,
    };
    let refs: Vec<_> = entries.iter().collect();
    let report = evaluate(&checkpoint.model, &source, &refs, trained)?;
    report.confusion.write_all(out_dir)?;
    Ok(report)
}
