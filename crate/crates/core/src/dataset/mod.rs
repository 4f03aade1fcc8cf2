//! UrbanSound8K metadata, class subsets and train/test splits.

mod split;
mod subset;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use split::{split, split_by_fold, SplitAssignment, SplitMode};
pub use subset::{select_subset, ClassSubset};

/// The ten UrbanSound8K labels, indexed by `classID`.
pub const CLASS_NAMES: [&str; 10] = [
    "air_conditioner",
    "car_horn",
    "children_playing",
    "dog_bark",
    "drilling",
    "engine_idling",
    "gun_shot",
    "jackhammer",
    "siren",
    "street_music",
];

/// Number of slices in the released corpus.
pub const FULL_CORPUS_SIZE: usize = 8732;

/// Slices are cut to strictly less than this many seconds.
pub const MAX_SLICE_SECONDS: f64 = 5.0;

const REQUIRED_COLUMNS: [&str; 8] =
    ["slice_file_name", "fsID", "start", "end", "salience", "fold", "classID", "class"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("metadata is missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: column `{column}` has unparseable value `{value}`")]
    BadNumber { line: u64, column: &'static str, value: String },
    #[error("line {line}: classID {value} is outside 0-9")]
    ClassIdOutOfRange { line: u64, value: i64 },
    #[error("line {line}: fold {value} is outside 1-10")]
    FoldOutOfRange { line: u64, value: i64 },
    #[error("line {line}: class `{name}` does not match classID {class_id} (`{expected}`)")]
    ClassMismatch { line: u64, class_id: u8, name: String, expected: &'static str },
    #[error("line {line}: invalid slice timing start={start} end={end}")]
    BadTiming { line: u64, start: f64, end: f64 },
    #[error("line {line}: malformed CSV record: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error("UrbanSound8K.csv not found; looked for {}", display_paths(.0))]
    MetadataNotFound(Vec<PathBuf>),
    #[error("fold directories not found under {0}")]
    AudioRootNotFound(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("class list is empty")]
    EmptySubset,
    #[error("class {0} listed more than once")]
    DuplicateClass(u8),
    #[error("class id {0} is outside 0-9")]
    UnknownClass(u8),
    #[error("unknown class preset `{0}` (expected av7, all10 or a comma-separated id list)")]
    UnknownPreset(String),
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    RatioOutOfRange(f64),
    #[error("no entries to split")]
    NothingToSplit,
    #[error("fold-holdout split left the {0} partition empty")]
    EmptyPartition(&'static str),
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

/// One metadata row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file_name: String,
    pub path: PathBuf,
    pub fold: u8,
    pub class_id: u8,
    /// freesound.org recording id.
    pub source_id: u64,
    pub start_s: f64,
    pub end_s: f64,
    pub salience: u8,
}

impl ManifestEntry {
    pub fn class_name(&self) -> &'static str {
        CLASS_NAMES[self.class_id as usize]
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Parsed corpus metadata. Immutable after construction.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub root_path: PathBuf,
}

impl DatasetManifest {
    pub fn class_names(&self) -> &'static [&'static str; 10] {
        &CLASS_NAMES
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry count per `classID`.
    pub fn class_counts(&self) -> [usize; 10] {
        let mut counts = [0; 10];
        for e in &self.entries {
            counts[e.class_id as usize] += 1;
        }
        counts
    }
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    column: &'static str,
    line: u64,
) -> Result<T, DatasetError> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| DatasetError::BadNumber { line, column, value: raw.to_string() })
}

/// Parses `UrbanSound8K.csv`. Audio paths resolve to
/// `root/fold{fold}/{slice_file_name}`. Errors carry the 1-based line of
/// the offending record (the header is line 1).
pub fn parse_metadata(csv_text: &str, root_path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = csv_text.strip_prefix('\u{feff}').unwrap_or(csv_text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| DatasetError::Csv { line: 1, source: e })?.clone();
    let mut cols = [0usize; 8];
    for (slot, name) in cols.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or(DatasetError::MissingColumn(name))?;
    }
    let [c_file, c_fsid, c_start, c_end, c_sal, c_fold, c_class_id, c_class] = cols;

    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let fallback_line = i as u64 + 2;
        let record = record.map_err(|e| DatasetError::Csv {
            line: e.position().map_or(fallback_line, |p| p.line()),
            source: e,
        })?;
        let line = record.position().map_or(fallback_line, |p| p.line());

        let class_raw: i64 = parse_field(&record, c_class_id, "classID", line)?;
        if !(0..=9).contains(&class_raw) {
            return Err(DatasetError::ClassIdOutOfRange { line, value: class_raw });
        }
        let class_id = class_raw as u8;
        let name = record.get(c_class).unwrap_or("");
        if name != CLASS_NAMES[class_id as usize] {
            return Err(DatasetError::ClassMismatch {
                line,
                class_id,
                name: name.to_string(),
                expected: CLASS_NAMES[class_id as usize],
            });
        }
        let fold_raw: i64 = parse_field(&record, c_fold, "fold", line)?;
        if !(1..=10).contains(&fold_raw) {
            return Err(DatasetError::FoldOutOfRange { line, value: fold_raw });
        }
        let fold = fold_raw as u8;
        let start_s: f64 = parse_field(&record, c_start, "start", line)?;
        let end_s: f64 = parse_field(&record, c_end, "end", line)?;
        if !(start_s.is_finite() && end_s.is_finite())
            || end_s < start_s
            || end_s - start_s >= MAX_SLICE_SECONDS
        {
            return Err(DatasetError::BadTiming { line, start: start_s, end: end_s });
        }
        let file_name = record.get(c_file).unwrap_or("").to_string();
        entries.push(ManifestEntry {
            path: root_path.join(format!("fold{fold}")).join(&file_name),
            file_name,
            fold,
            class_id,
            source_id: parse_field(&record, c_fsid, "fsID", line)?,
            start_s,
            end_s,
            salience: parse_field(&record, c_sal, "salience", line)?,
        });
    }
    Ok(DatasetManifest { entries, root_path: root_path.to_path_buf() })
}

/// Where a corpus directory keeps its metadata and audio.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusLayout {
    pub metadata_csv: PathBuf,
    pub audio_root: PathBuf,
}

/// Metadata locations probed, in order.
pub fn metadata_candidates(data_dir: &Path) -> Vec<PathBuf> {
    vec![data_dir.join("UrbanSound8K.csv"), data_dir.join("metadata").join("UrbanSound8K.csv")]
}

/// Finds the metadata CSV and the directory holding `fold1..fold10`.
pub fn locate_corpus(data_dir: &Path) -> Result<CorpusLayout, DatasetError> {
    let candidates = metadata_candidates(data_dir);
    let metadata_csv = candidates
        .iter()
        .find(|p| p.is_file())
        .cloned()
        .ok_or_else(|| DatasetError::MetadataNotFound(candidates.clone()))?;
    let audio_root = [data_dir.to_path_buf(), data_dir.join("audio")]
        .into_iter()
        .find(|root| (1..=10).any(|f| root.join(format!("fold{f}")).is_dir()))
        .ok_or_else(|| DatasetError::AudioRootNotFound(data_dir.to_path_buf()))?;
    Ok(CorpusLayout { metadata_csv, audio_root })
}

/// Locates and parses a corpus directory.
pub fn load_manifest(data_dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let layout = locate_corpus(data_dir)?;
    let text = std::fs::read_to_string(&layout.metadata_csv)
        .map_err(|e| DatasetError::Io { path: layout.metadata_csv.clone(), source: e })?;
    parse_metadata(&text, &layout.audio_root)
}
