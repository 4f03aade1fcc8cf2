use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetManifest, ManifestEntry, CLASS_NAMES};

/// A set of kept `classID`s and their contiguous model indices.
///
/// Indices follow ascending original id, so `{0,1,2,3,5,6,8}` maps `5 -> 4`,
/// `6 -> 5` and `8 -> 6`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct ClassSubset {
    kept: Vec<u8>,
    remap: [Option<usize>; 10],
}

impl ClassSubset {
    pub fn new(kept_class_ids: &[u8]) -> Result<Self, DatasetError> {
        if kept_class_ids.is_empty() {
            return Err(DatasetError::EmptySubset);
        }
        let mut seen = [false; 10];
        for &id in kept_class_ids {
            if id > 9 {
                return Err(DatasetError::UnknownClass(id));
            }
            if std::mem::replace(&mut seen[id as usize], true) {
                return Err(DatasetError::DuplicateClass(id));
            }
        }
        let kept: Vec<u8> = (0..10u8).filter(|&id| seen[id as usize]).collect();
        let mut remap = [None; 10];
        for (idx, &id) in kept.iter().enumerate() {
            remap[id as usize] = Some(idx);
        }
        Ok(Self { kept, remap })
    }

    /// The seven vehicle-relevant classes: everything except drilling,
    /// jackhammer and street music.
    pub fn av7() -> Self {
        Self::new(&[0, 1, 2, 3, 5, 6, 8]).expect("valid preset")
    }

    pub fn all10() -> Self {
        Self::new(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]).expect("valid preset")
    }

    /// `av7`, `all10`, or a comma-separated id list such as `1,3,8`.
    pub fn from_preset(spec: &str) -> Result<Self, DatasetError> {
        match spec.trim() {
            "av7" => Ok(Self::av7()),
            "all10" => Ok(Self::all10()),
            other => {
                let ids = other
                    .split(',')
                    .map(|s| s.trim().parse::<u8>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| DatasetError::UnknownPreset(other.to_string()))?;
                Self::new(&ids)
            }
        }
    }

    /// Short label: `av7`, `all10`, or the id list.
    pub fn label(&self) -> String {
        if *self == Self::av7() {
            "av7".into()
        } else if *self == Self::all10() {
            "all10".into()
        } else {
            self.kept.iter().map(u8::to_string).collect::<Vec<_>>().join(",")
        }
    }

    pub fn kept_class_ids(&self) -> &[u8] {
        &self.kept
    }

    /// Number of classes `K`.
    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn contains(&self, class_id: u8) -> bool {
        self.index_of(class_id).is_some()
    }

    /// Contiguous index for an original class id.
    pub fn index_of(&self, class_id: u8) -> Option<usize> {
        self.remap.get(class_id as usize).copied().flatten()
    }

    /// Original class id for a contiguous index.
    pub fn class_id(&self, index: usize) -> u8 {
        self.kept[index]
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kept.iter().map(|&id| CLASS_NAMES[id as usize]).collect()
    }
}

impl TryFrom<Vec<u8>> for ClassSubset {
    type Error = DatasetError;

    fn try_from(ids: Vec<u8>) -> Result<Self, Self::Error> {
        Self::new(&ids)
    }
}

impl From<ClassSubset> for Vec<u8> {
    fn from(s: ClassSubset) -> Self {
        s.kept
    }
}

/// Keeps the entries whose class is in `kept_class_ids`, in manifest order.
pub fn select_subset(
    manifest: &DatasetManifest,
    kept_class_ids: &[u8],
) -> Result<(Vec<ManifestEntry>, ClassSubset), DatasetError> {
    let subset = ClassSubset::new(kept_class_ids)?;
    let entries = manifest.entries.iter().filter(|e| subset.contains(e.class_id)).cloned().collect();
    Ok((entries, subset))
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;

    fn manifest() -> DatasetManifest {
        let entries = (0..20u8)
            .map(|i| ManifestEntry {
                file_name: format!("{i}.wav"),
                path: PathBuf::from(format!("{i}.wav")),
                fold: 1,
                class_id: i % 10,
                source_id: i as u64,
                start_s: 0.0,
                end_s: 1.0,
                salience: 1,
            })
            .collect();
        DatasetManifest { entries, root_path: PathBuf::new() }
    }

    proptest::proptest! {
        #[test]
        fn selection_keeps_manifest_and_class_order(ids in proptest::sample::subsequence((0u8..10).collect::<Vec<_>>(), 1..=10)) {
            let mut shuffled = ids.clone();
            shuffled.reverse();
            let (entries, s) = select_subset(&manifest(), &shuffled).unwrap();
            // kept entries appear in manifest order
            let positions: Vec<u64> = entries.iter().map(|e| e.source_id).collect();
            proptest::prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
            // indices follow ascending class id
            let idx: Vec<usize> = ids.iter().map(|&id| s.index_of(id).unwrap()).collect();
            proptest::prop_assert_eq!(idx, (0..ids.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn av7_remap() {
        let (entries, s) = select_subset(&manifest(), &[0, 1, 2, 3, 5, 6, 8]).unwrap();
        let expected = [(0, 0), (1, 1), (2, 2), (3, 3), (5, 4), (6, 5), (8, 6)];
        for (id, idx) in expected {
            assert_eq!(s.index_of(id), Some(idx));
            assert_eq!(s.class_id(idx), id);
        }
        for id in [4, 7, 9] {
            assert_eq!(s.index_of(id), None);
        }
        assert_eq!(s, ClassSubset::av7());
        assert_eq!(entries.len(), 14);
        assert!(entries.iter().all(|e| s.contains(e.class_id)));
        assert_eq!(s.names()[4], "engine_idling");
    }

    #[test]
    fn all_ten_is_identity() {
        let (entries, s) = select_subset(&manifest(), &[9, 8, 7, 6, 5, 4, 3, 2, 1, 0]).unwrap();
        assert_eq!(entries.len(), 20);
        for id in 0..10u8 {
            assert_eq!(s.index_of(id), Some(id as usize));
        }
        assert_eq!(s.label(), "all10");
    }

    #[test]
    fn excluded_complement() {
        let (entries, s) = select_subset(&manifest(), &[4, 7, 9]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.names(), vec!["drilling", "jackhammer", "street_music"]);
        assert_eq!(entries.len(), 6);
        assert_eq!(s.label(), "4,7,9");
    }

    #[test]
    fn invalid_lists() {
        assert!(matches!(ClassSubset::new(&[]), Err(DatasetError::EmptySubset)));
        assert!(matches!(ClassSubset::new(&[1, 1]), Err(DatasetError::DuplicateClass(1))));
        assert!(matches!(ClassSubset::new(&[10]), Err(DatasetError::UnknownClass(10))));
        assert!(ClassSubset::from_preset("av8").is_err());
        assert_eq!(ClassSubset::from_preset(" 3,1 ").unwrap().kept_class_ids(), &[1, 3]);
    }

    #[test]
    fn serde_as_id_list() {
        let json = serde_json::to_string(&ClassSubset::av7()).unwrap();
        assert_eq!(json, "[0,1,2,3,5,6,8]");
        let back: ClassSubset = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ClassSubset::av7());
        assert!(serde_json::from_str::<ClassSubset>("[2,2]").is_err());
    }
}
