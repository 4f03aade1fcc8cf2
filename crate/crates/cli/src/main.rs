use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use urban_acoustics::dataset::{load_manifest, select_subset, ClassSubset, DatasetManifest, SplitMode, CLASS_NAMES};
use urban_acoustics::features::FeatureExtractor;
use urban_acoustics::nn::{load_checkpoint, Checkpoint};
use urban_acoustics::train::{
    eval_run, make_synthetic_corpus, predict, synth_class_ids, train_run, EpochRecord, EvalReport, EvalScope,
    FeatureSource, Precision, SynthSpec,
};
use urban_acoustics::{RunConfig, Scalar};

const DATA_ENV: &str = "URBAN_ACOUSTICS_DATA";

#[derive(Parser)]
#[command(name = "urban-acoustics", version, about = "Urban sound classification with a CNN trained from scratch")]
struct Cli {
    /// Worker threads for feature extraction and convolution (default: all cores).
    #[arg(long, global = true, env = "URBAN_ACOUSTICS_THREADS")]
    threads: Option<usize>,
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus, report per-class counts and optionally fill the feature cache.
    Prepare(PrepareArgs),
    /// Train a model and write the checkpoint, history and confusion matrices.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Classify WAV files with a checkpoint.
    Predict(PredictArgs),
    /// Write a synthetic tone-per-class corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Corpus root holding UrbanSound8K.csv (or metadata/UrbanSound8K.csv) and the fold directories.
    #[arg(long, env = DATA_ENV)]
    data: PathBuf,
    /// Feature cache directory to fill with un-augmented features.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// av7, all10 or a comma-separated list of class ids.
    #[arg(long, default_value = "all10")]
    classes: String,
    /// Run config whose feature settings to use.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    /// Stratified 80/20 shuffle (the paper's protocol).
    Random,
    /// Hold out whole dataset folds (see --test-fold).
    Folds,
}

#[derive(Args)]
struct TrainArgs {
    /// Start from this run config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = DATA_ENV)]
    data: Option<PathBuf>,
    /// Output directory for the checkpoint, history and confusion matrices.
    #[arg(long)]
    out: Option<PathBuf>,
    /// av7, all10 or a comma-separated list of class ids [default: av7].
    #[arg(long)]
    classes: Option<String>,
    /// [default: 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// [default: 16]
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    /// [default: random]
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    /// Test folds for --split folds (repeatable) [default: 10].
    #[arg(long = "test-fold")]
    test_folds: Vec<u8>,
    /// Fraction of each class used for training with --split random [default: 0.8].
    #[arg(long)]
    split_ratio: Option<f64>,
    /// Disable time shift and spectrogram masking.
    #[arg(long)]
    no_augment: bool,
    /// f32 or f64 [default: f32].
    #[arg(long)]
    precision: Option<Precision>,
    /// `paper` or `scaled:<divisor>` (channel widths divided by the divisor) [default: paper].
    #[arg(long)]
    arch: Option<String>,
    /// Also save best.usnd, the checkpoint with the best test accuracy.
    #[arg(long)]
    keep_best: bool,
    /// Evaluate on the test split every N epochs, 0 for only at the end [default: 1].
    #[arg(long)]
    eval_interval: Option<usize>,
    /// On-disk feature cache.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, env = DATA_ENV)]
    data: PathBuf,
    /// Class subset the data is expected to cover; must match the checkpoint.
    #[arg(long)]
    classes: Option<String>,
    /// Score every clip of the subset instead of the recomputed test split.
    #[arg(long)]
    all: bool,
    /// Where to write the confusion matrices [default: <checkpoint dir>/eval].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Load the weights as f32 or f64.
    #[arg(long, default_value = "f32")]
    precision: Precision,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "f32")]
    precision: Precision,
    #[arg(required = true)]
    wavs: Vec<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Number of classes, 1 to 10. Seven gives the av7 subset.
    #[arg(long, default_value_t = 7)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Per-item failures (exit 1) are reported through `Ok(false)`; errors
/// are configuration or corpus problems (exit 2).
type Outcome = Result<bool>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict_files(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn subset(spec: &str) -> Result<ClassSubset> {
    ClassSubset::from_preset(spec).with_context(|| format!("invalid --classes {spec:?}"))
}

fn manifest(data: &Path) -> Result<DatasetManifest> {
    load_manifest(data).with_context(|| format!("cannot load corpus at {}", data.display()))
}

fn print_counts(entries: &[urban_acoustics::ManifestEntry], subset: &ClassSubset) {
    println!("{} clips in {} classes", entries.len(), subset.len());
    for &id in subset.kept_class_ids() {
        let n = entries.iter().filter(|e| e.class_id == id).count();
        println!("  {id} {:<17} {n}", CLASS_NAMES[id as usize]);
    }
}

fn prepare(a: PrepareArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let manifest = manifest(&a.data)?;
    let subset = subset(&a.classes)?;
    let (entries, subset) = select_subset(&manifest, subset.kept_class_ids())?;
    print_counts(&entries, &subset);

    let failures: Vec<String> = match &a.cache {
        Some(dir) => {
            cfg.data_dir = Some(a.data.clone());
            cfg.cache_dir = Some(dir.clone());
            cfg.train.classes = subset.clone();
            cfg.save_in(dir)?;
            let source = FeatureSource::<f32>::new(cfg.features)?.with_memory_cache(false).with_disk_cache(dir.clone());
            let start = Instant::now();
            let failures = entries.par_iter().filter_map(|e| source.raw_db(e).err().map(|err| err.to_string())).collect();
            println!("features cached in {} ({:.1}s)", dir.display(), start.elapsed().as_secs_f64());
            failures
        }
        None => entries
            .par_iter()
            .filter_map(|e| {
                let bytes = match std::fs::read(&e.path) {
                    Ok(b) => b,
                    Err(err) => return Some(format!("{}: {err}", e.path.display())),
                };
                urban_acoustics::audio_io::probe_format(&bytes).err().map(|err| format!("{}: {err}", e.path.display()))
            })
            .collect(),
    };
    for f in &failures {
        eprintln!("unreadable: {f}");
    }
    if !failures.is_empty() {
        eprintln!("{} of {} files failed", failures.len(), entries.len());
    }
    Ok(failures.is_empty())
}

fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &a.data {
        cfg.data_dir = Some(d.clone());
    }
    if let Some(o) = &a.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(c) = &a.cache {
        cfg.cache_dir = Some(c.clone());
    }
    let t = &mut cfg.train;
    if let Some(c) = &a.classes {
        t.classes = subset(c)?;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.batch {
        t.batch_size = v;
    }
    if let Some(v) = a.lr {
        t.optimizer.lr = v;
    }
    if let Some(v) = a.split_ratio {
        t.split_ratio = v;
    }
    match a.split {
        Some(SplitArg::Random) => t.split = SplitMode::RandomStratified,
        Some(SplitArg::Folds) => {
            let folds = if a.test_folds.is_empty() { vec![10] } else { a.test_folds.clone() };
            t.split = SplitMode::FoldHoldout { test_folds: folds };
        }
        None if !a.test_folds.is_empty() => t.split = SplitMode::FoldHoldout { test_folds: a.test_folds.clone() },
        None => {}
    }
    if a.no_augment {
        t.augment.enabled = false;
    }
    if let Some(p) = a.precision {
        t.precision = p;
    }
    if let Some(arch) = &a.arch {
        t.architecture = arch.clone();
    }
    if a.keep_best {
        t.keep_best = true;
    }
    if let Some(v) = a.eval_interval {
        t.eval_interval = v;
    }
    t.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Outcome {
    let cfg = resolve_train_config(&a)?;
    let data = cfg.data_dir.clone().with_context(|| format!("no corpus given (use --data or {DATA_ENV})"))?;
    let out = cfg.output_dir.clone().context("no output directory given (use --out)")?;
    let manifest = manifest(&data)?;
    let t = &cfg.train;
    println!(
        "training {} on {} ({} epochs, batch {}, lr {}, {} split, {}, {})",
        t.architecture,
        t.classes.label(),
        t.epochs,
        t.batch_size,
        t.optimizer.lr,
        t.split.label(),
        match t.precision {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        },
        if t.augment.enabled { "augmented" } else { "no augmentation" },
    );
    let report = match t.precision {
        Precision::F32 => run_training::<f32>(&cfg, &manifest, &out)?,
        Precision::F64 => run_training::<f64>(&cfg, &manifest, &out)?,
    };
    match report {
        Some(r) => print_report(&r),
        None => println!("test partition is empty; no confusion matrix written"),
    }
    println!("outputs in {}", out.display());
    Ok(true)
}

fn run_training<T: Scalar>(cfg: &RunConfig, manifest: &DatasetManifest, out: &Path) -> Result<Option<EvalReport>> {
    let total = cfg.train.epochs;
    let start = Instant::now();
    let outcome = train_run::<T>(cfg, manifest, out, |r: &EpochRecord| {
        let test = r.test_acc.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "epoch {:>3}/{total}  loss {:.4}  train_acc {:.4}  test_acc {test}  [{:.0}s]",
            r.epoch,
            r.train_loss,
            r.train_acc,
            start.elapsed().as_secs_f64()
        );
    })?;
    if let Some((acc, epoch)) = outcome.best {
        println!("best test accuracy {acc:.4} at epoch {epoch}");
    }
    Ok(outcome.test_report)
}

fn print_report(r: &EvalReport) {
    println!("accuracy {:.4} ({} of {})", r.accuracy, r.confusion.trace(), r.confusion.total());
    for (name, acc) in r.confusion.class_names.iter().zip(&r.per_class) {
        let acc = acc.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!("  {name:<17} {acc}");
    }
}

fn eval(a: EvalArgs) -> Outcome {
    let requested = a.classes.as_deref().map(subset).transpose()?;
    let out = match &a.out {
        Some(o) => o.clone(),
        None => a.checkpoint.parent().unwrap_or(Path::new(".")).join("eval"),
    };
    let manifest = manifest(&a.data)?;
    let scope = if a.all { EvalScope::All } else { EvalScope::TestSplit };
    let report = match a.precision {
        Precision::F32 => {
            let ckpt = load::<f32>(&a.checkpoint)?;
            eval_run(&ckpt, &manifest, requested.as_ref(), scope, a.cache.as_deref(), &out)?
        }
        Precision::F64 => {
            let ckpt = load::<f64>(&a.checkpoint)?;
            eval_run(&ckpt, &manifest, requested.as_ref(), scope, a.cache.as_deref(), &out)?
        }
    };
    print_report(&report);
    println!("confusion matrices in {}", out.display());
    Ok(true)
}

fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    load_checkpoint::<T>(path).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn predict_files(a: PredictArgs) -> Outcome {
    match a.precision {
        Precision::F32 => predict_with::<f32>(&a),
        Precision::F64 => predict_with::<f64>(&a),
    }
}

fn predict_with<T: Scalar>(a: &PredictArgs) -> Outcome {
    let ckpt = load::<T>(&a.checkpoint)?;
    let cfg: RunConfig = serde_json::from_value(ckpt.meta.config.clone())
        .context("checkpoint carries an unreadable run config")?;
    let extractor = FeatureExtractor::<T>::new(cfg.features)?;
    let names = ckpt.meta.classes.names();
    let mut ok = true;
    for path in &a.wavs {
        match predict(&ckpt.model, &ckpt.meta.classes, &extractor, path) {
            Ok(p) => {
                let probs: Vec<String> =
                    names.iter().zip(&p.probabilities).map(|(n, v)| format!("{n}={v:.4}")).collect();
                println!("{}\t{}\t{}", path.display(), p.class_name, probs.join(" "));
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn synth(a: SynthArgs) -> Outcome {
    let ids = synth_class_ids(a.classes)?;
    if a.out.exists() && a.out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false) {
        bail!("{} exists and is not empty", a.out.display());
    }
    let manifest = make_synthetic_corpus(&a.out, SynthSpec { seed: a.seed, classes: a.classes, per_class: a.per_class })?;
    let mut cfg = RunConfig { data_dir: Some(a.out.clone()), ..RunConfig::default() };
    cfg.train.classes = ClassSubset::new(&ids)?;
    cfg.save_in(&a.out)?;
    println!("wrote {} clips to {}", manifest.len(), a.out.display());
    print_counts(&manifest.entries, &cfg.train.classes);
    Ok(true)
}
