use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetError, ManifestEntry};
use crate::rng::{stream_rng, Stream};

/// How the test partition is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SplitMode {
    /// Seeded shuffle, each class split independently at the ratio.
    RandomStratified,
    /// Seeded shuffle of the whole list.
    Random,
    /// The listed dataset folds form the test set. Slices of one recording
    /// share a fold, so this split cannot leak a source across partitions.
    FoldHoldout { test_folds: Vec<u8> },
}

impl Default for SplitMode {
    fn default() -> Self {
        SplitMode::RandomStratified
    }
}

impl SplitMode {
    pub fn label(&self) -> String {
        match self {
            SplitMode::RandomStratified => "random-stratified".into(),
            SplitMode::Random => "random".into(),
            SplitMode::FoldHoldout { test_folds } => format!(
                "fold-holdout[{}]",
                test_folds.iter().map(u8::to_string).collect::<Vec<_>>().join(",")
            ),
        }
    }

    /// Applies this mode to `entries`.
    pub fn apply(&self, entries: &[ManifestEntry], ratio: f64, seed: u64) -> Result<SplitAssignment, DatasetError> {
        match self {
            SplitMode::RandomStratified => split(entries, ratio, seed, true),
            SplitMode::Random => split(entries, ratio, seed, false),
            SplitMode::FoldHoldout { test_folds } => split_by_fold(entries, test_folds),
        }
    }
}

/// Disjoint train/test index lists into the entry slice that was split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
    /// Non-fatal notes, e.g. a singleton class forced into train.
    pub warnings: Vec<String>,
}

/// Seeded train/test split. The shuffle uses ChaCha8 seeded from `seed`
/// alone (via [`Stream::Split`]). Stratified splits group entries by
/// `class_id` and send `round(ratio * n_class)` of each class to train; a
/// class with a single sample goes to train with a warning.
pub fn split(
    entries: &[ManifestEntry],
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<SplitAssignment, DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::RatioOutOfRange(ratio));
    }
    if entries.is_empty() {
        return Err(DatasetError::NothingToSplit);
    }
    let mut rng = stream_rng(seed, Stream::Split);
    let groups: Vec<Vec<usize>> = if stratified {
        let mut by_class = vec![Vec::new(); 10];
        for (i, e) in entries.iter().enumerate() {
            by_class[e.class_id as usize].push(i);
        }
        by_class.into_iter().filter(|g| !g.is_empty()).collect()
    } else {
        vec![(0..entries.len()).collect()]
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for mut group in groups {
        if stratified && group.len() == 1 {
            let msg = format!(
                "class {} has a single sample; assigned to train",
                entries[group[0]].class_name()
            );
            log::warn!("{msg}");
            warnings.push(msg);
            train.push(group[0]);
            continue;
        }
        group.shuffle(&mut rng);
        let n_train = (ratio * group.len() as f64).round() as usize;
        train.extend_from_slice(&group[..n_train]);
        test.extend_from_slice(&group[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitAssignment { train_indices: train, test_indices: test, seed, ratio, warnings })
}

/// Entries in `test_folds` go to test, the rest to train.
pub fn split_by_fold(entries: &[ManifestEntry], test_folds: &[u8]) -> Result<SplitAssignment, DatasetError> {
    if entries.is_empty() {
        return Err(DatasetError::NothingToSplit);
    }
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..entries.len()).partition(|&i| test_folds.contains(&entries[i].fold));
    if train.is_empty() {
        return Err(DatasetError::EmptyPartition("train"));
    }
    if test.is_empty() {
        return Err(DatasetError::EmptyPartition("test"));
    }
    let ratio = train.len() as f64 / entries.len() as f64;
    Ok(SplitAssignment { train_indices: train, test_indices: test, seed: 0, ratio, warnings: vec![] })
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use proptest::prelude::*;

    use super::*;

    fn entries(class_sizes: &[(u8, usize)]) -> Vec<ManifestEntry> {
        let mut out = Vec::new();
        for &(class_id, n) in class_sizes {
            for i in 0..n {
                out.push(ManifestEntry {
                    file_name: format!("{class_id}-{i}.wav"),
                    path: PathBuf::new(),
                    fold: (i % 10) as u8 + 1,
                    class_id,
                    source_id: i as u64,
                    start_s: 0.0,
                    end_s: 1.0,
                    salience: 1,
                });
            }
        }
        out
    }

    #[test]
    fn ten_of_one_class() {
        let s = split(&entries(&[(3, 10)]), 0.8, 1, true).unwrap();
        assert_eq!((s.train_indices.len(), s.test_indices.len()), (8, 2));
    }

    #[test]
    fn stratified_sizes() {
        let e = entries(&[(0, 100), (6, 50)]);
        let s = split(&e, 0.8, 42, true).unwrap();
        let train_c0 = s.train_indices.iter().filter(|&&i| e[i].class_id == 0).count();
        let train_c6 = s.train_indices.iter().filter(|&&i| e[i].class_id == 6).count();
        assert_eq!((train_c0, train_c6), (80, 40));
    }

    #[test]
    fn same_seed_same_split() {
        let e = entries(&[(0, 30), (1, 17)]);
        assert_eq!(split(&e, 0.8, 9, true).unwrap(), split(&e, 0.8, 9, true).unwrap());
        assert_ne!(
            split(&e, 0.8, 9, true).unwrap().test_indices,
            split(&e, 0.8, 10, true).unwrap().test_indices
        );
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let e = entries(&[(0, 10), (1, 1)]);
        let s = split(&e, 0.8, 0, true).unwrap();
        assert!(s.train_indices.contains(&10));
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn ratio_bounds() {
        let e = entries(&[(0, 4)]);
        for r in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(split(&e, r, 0, true), Err(DatasetError::RatioOutOfRange(_))));
        }
    }

    #[test]
    fn fold_holdout() {
        let e = entries(&[(0, 20), (2, 20)]);
        let s = split_by_fold(&e, &[10]).unwrap();
        assert_eq!(s.test_indices.len(), 4);
        assert!(s.test_indices.iter().all(|&i| e[i].fold == 10));
        assert!(s.train_indices.iter().all(|&i| e[i].fold != 10));
        assert!(matches!(split_by_fold(&e, &[]), Err(DatasetError::EmptyPartition("test"))));
    }

    proptest! {
        #[test]
        fn partition_is_exact(
            sizes in proptest::collection::vec(2usize..40, 1..6),
            ratio in 0.05f64..0.95,
            seed in any::<u64>(),
            stratified in any::<bool>(),
        ) {
            let spec: Vec<(u8, usize)> = sizes.iter().enumerate().map(|(c, &n)| (c as u8, n)).collect();
            let e = entries(&spec);
            let s = split(&e, ratio, seed, stratified).unwrap();
            let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..e.len()).collect::<Vec<_>>());
            prop_assert_eq!(&s, &split(&e, ratio, seed, stratified).unwrap());
            if stratified {
                for &(c, n) in &spec {
                    let t = s.train_indices.iter().filter(|&&i| e[i].class_id == c).count() as f64;
                    prop_assert!((t - ratio * n as f64).abs() <= 1.0);
                }
            }
        }
    }
}
