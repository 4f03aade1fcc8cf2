use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::metrics::{ConfusionMatrix, EvalReport};
use super::source::FeatureSource;
use super::{EpochRecord, TrainAccuracyMode, TrainConfig, TrainError};
use crate::dataset::{select_subset, ClassSubset, DatasetError, DatasetManifest, ManifestEntry, SplitAssignment};
use crate::features::FeatureConfig;
use crate::nn::{adam_step, argmax, softmax_cross_entropy, AdamState, Model, ModelConfig, Tensor};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

const EVAL_BATCH: usize = 32;

/// Splits `order` into batches of `size`, folding a trailing single example
/// into the previous batch (batch norm needs two samples).
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

fn stack<T: Scalar>(items: &[Arc<[T]>], shape: (usize, usize, usize)) -> Result<Tensor<T>, TrainError> {
    let refs: Vec<&[T]> = items.iter().map(|a| &a[..]).collect();
    Ok(Tensor::stack(&refs, &[shape.0, shape.1, shape.2])?)
}

fn label_of(subset: &ClassSubset, e: &ManifestEntry) -> Result<usize, TrainError> {
    subset
        .index_of(e.class_id)
        .ok_or(TrainError::Dataset(DatasetError::UnknownClass(e.class_id)))
}

/// Eval-mode accuracy, confusion matrix and loss over `entries`.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    source: &FeatureSource<T>,
    entries: &[&ManifestEntry],
    subset: &ClassSubset,
) -> Result<EvalReport, TrainError> {
    if model.classes() != subset.len() {
        return Err(TrainError::SubsetMismatch {
            model: format!("{} classes", model.classes()),
            requested: subset.label(),
        });
    }
    if entries.is_empty() {
        return Err(TrainError::EmptyEvaluation);
    }
    let labels = entries.iter().map(|e| label_of(subset, e)).collect::<Result<Vec<_>, _>>()?;
    let names = subset.names().iter().map(|s| s.to_string()).collect();
    let mut confusion = ConfusionMatrix::new(names);
    let mut predictions = Vec::with_capacity(entries.len());
    let mut loss_sum = 0.0;
    for (chunk, chunk_labels) in entries.chunks(EVAL_BATCH).zip(labels.chunks(EVAL_BATCH)) {
        let feats = chunk.par_iter().map(|e| source.clean(e)).collect::<Result<Vec<_>, _>>()?;
        let logits = model.forward_eval(&stack(&feats, source.shape())?)?;
        let (loss, _) = softmax_cross_entropy(&logits, chunk_labels)?;
        loss_sum += loss.to_f64().unwrap() * chunk.len() as f64;
        for (row, &y) in logits.data().chunks_exact(model.classes()).zip(chunk_labels) {
            let p = argmax(row);
            confusion.record(y, p);
            predictions.push(p);
        }
    }
    Ok(EvalReport {
        accuracy: confusion.accuracy(),
        per_class: confusion.per_class_accuracy(),
        confusion,
        predictions,
        mean_loss: loss_sum / entries.len() as f64,
    })
}

/// The class-filtered entries of `manifest` and their train/test split, as
/// [`Trainer::new`] computes them. The split depends only on the entries,
/// the split mode, the ratio and the seed.
pub fn partition(
    manifest: &DatasetManifest,
    config: &TrainConfig,
) -> Result<(Vec<ManifestEntry>, ClassSubset, SplitAssignment), TrainError> {
    let (entries, subset) = select_subset(manifest, config.classes.kept_class_ids())?;
    if entries.is_empty() {
        return Err(TrainError::Dataset(DatasetError::EmptySubset));
    }
    let split = config.split.apply(&entries, config.split_ratio, config.seed)?;
    Ok((entries, subset, split))
}

/// Owns the model, optimizer state and data split for one run.
pub struct Trainer<T: Scalar> {
    config: TrainConfig,
    entries: Vec<ManifestEntry>,
    labels: Vec<usize>,
    split: SplitAssignment,
    source: FeatureSource<T>,
    model: Model<T>,
    adam: AdamState<T>,
    history: Vec<EpochRecord>,
    best: Option<(f64, usize, Model<T>)>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(manifest: &DatasetManifest, config: TrainConfig, source: FeatureSource<T>) -> Result<Self, TrainError> {
        config.validate()?;
        let (entries, subset, split) = partition(manifest, &config)?;
        let labels = entries.iter().map(|e| label_of(&subset, e)).collect::<Result<Vec<_>, _>>()?;
        if split.train_indices.is_empty() {
            return Err(TrainError::Config("the split left no training examples".into()));
        }
        for w in &split.warnings {
            log::warn!("{w}");
        }
        let (c, m, f) = source.shape();
        let mut model_cfg = ModelConfig::from_arch(&config.architecture, subset.len())?;
        model_cfg.in_channels = c;
        model_cfg.input_hw = (m, f);
        let model = Model::init(model_cfg, config.seed)?;
        let adam = AdamState::new(config.optimizer, &model.trainable());
        Ok(Self { config, entries, labels, split, source, model, adam, history: Vec::new(), best: None })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn subset(&self) -> &ClassSubset {
        &self.config.classes
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }

    pub fn source(&self) -> &FeatureSource<T> {
        &self.source
    }

    pub fn split(&self) -> &SplitAssignment {
        &self.split
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    /// Best test accuracy so far with its epoch and weights (when `keep_best`).
    pub fn best(&self) -> Option<(f64, usize, &Model<T>)> {
        self.best.as_ref().map(|(a, e, m)| (*a, *e, m))
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    fn pick(&self, idx: &[usize]) -> Vec<&ManifestEntry> {
        idx.iter().map(|&i| &self.entries[i]).collect()
    }

    pub fn train_entries(&self) -> Vec<&ManifestEntry> {
        self.pick(&self.split.train_indices)
    }

    pub fn test_entries(&self) -> Vec<&ManifestEntry> {
        self.pick(&self.split.test_indices)
    }

    pub fn evaluate_test(&self) -> Result<Option<EvalReport>, TrainError> {
        let test = self.test_entries();
        if test.is_empty() {
            return Ok(None);
        }
        evaluate(&self.model, &self.source, &test, self.subset()).map(Some)
    }

    pub fn evaluate_train(&self) -> Result<EvalReport, TrainError> {
        evaluate(&self.model, &self.source, &self.train_entries(), self.subset())
    }

    /// One pass over the shuffled training partition.
    pub fn run_epoch(&mut self) -> Result<EpochRecord, TrainError> {
        let epoch = self.history.len() + 1;
        let mut order = self.split.train_indices.clone();
        order.shuffle(&mut stream_rng(self.config.seed, Stream::Shuffle { epoch: epoch as u64 }));
        let shape = self.source.shape();
        let aug = self.config.augment;
        let seed = self.config.seed;

        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        for batch in batches(&order, self.config.batch_size) {
            let feats = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = stream_rng(seed, Stream::Augment { epoch: epoch as u64, item: i as u64 });
                    self.source.augmented(&self.entries[i], &aug, &mut rng)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let labels: Vec<usize> = batch.iter().map(|&i| self.labels[i]).collect();
            let x = stack(&feats, shape)?;
            let fwd = self.model.forward_train(&x)?;
            let (loss, g) = softmax_cross_entropy(&fwd.logits, &labels)?;
            let grads = self.model.backward(&fwd.cache, &g)?;
            adam_step(&mut self.model.trainable_mut(), &grads.tensors, &mut self.adam)?;
            self.model.apply_bn_stats(&fwd.bn_stats);

            loss_sum += loss.to_f64().unwrap() * batch.len() as f64;
            seen += batch.len();
            correct += fwd
                .logits
                .data()
                .chunks_exact(self.model.classes())
                .zip(&labels)
                .filter(|(row, &y)| argmax(row) == y)
                .count();
        }
        let train_acc = match self.config.train_accuracy {
            TrainAccuracyMode::Running => correct as f64 / seen as f64,
            TrainAccuracyMode::EvalPass => self.evaluate_train()?.accuracy,
        };
        let last = epoch == self.config.epochs;
        let interval = self.config.eval_interval;
        let test_acc = if last || (interval > 0 && epoch % interval == 0) {
            self.evaluate_test()?.map(|r| r.accuracy)
        } else {
            None
        };
        if let (true, Some(acc)) = (self.config.keep_best, test_acc) {
            if self.best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                self.best = Some((acc, epoch, self.model.clone()));
            }
        }
        let record = EpochRecord { epoch, train_loss: loss_sum / seen as f64, train_acc, test_acc };
        log::info!(
            "epoch {epoch}: loss {:.4} train_acc {:.4}{}",
            record.train_loss,
            record.train_acc,
            test_acc.map(|a| format!(" test_acc {a:.4}")).unwrap_or_default()
        );
        self.history.push(record.clone());
        Ok(record)
    }

    /// Runs the remaining configured epochs, reporting each record.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<(), TrainError> {
        while self.history.len() < self.config.epochs {
            let r = self.run_epoch()?;
            on_epoch(&r);
        }
        Ok(())
    }
}

/// Trains from scratch and returns the final model with its history.
pub fn train<T: Scalar>(
    manifest: &DatasetManifest,
    config: TrainConfig,
    features: FeatureConfig,
) -> Result<(Model<T>, Vec<EpochRecord>), TrainError> {
    let source = FeatureSource::new(features)?.with_memory_cache(config.cache_in_memory && !config.augment.enabled);
    let mut trainer = Trainer::new(manifest, config, source)?;
    trainer.run(|_| {})?;
    let history = trainer.history.clone();
    Ok((trainer.into_model(), history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_is_merged() {
        let order: Vec<usize> = (0..33).collect();
        let b = batches(&order, 16);
        assert_eq!(b.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![16, 17]);
        let order: Vec<usize> = (0..34).collect();
        assert_eq!(batches(&order, 16).iter().map(|b| b.len()).collect::<Vec<_>>(), vec![16, 16, 2]);
        let order = vec![5];
        assert_eq!(batches(&order, 16), vec![&[5][..]]);
        let order: Vec<usize> = (0..3).collect();
        assert_eq!(batches(&order, 1).iter().map(|b| b.len()).collect::<Vec<_>>(), vec![1, 2]);
    }
}
