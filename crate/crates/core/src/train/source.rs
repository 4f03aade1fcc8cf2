use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use crate::dataset::ManifestEntry;
use crate::dsp::AugmentConfig;
use crate::features::{FeatureCache, FeatureConfig, FeatureError, FeatureExtractor, SpectrogramTensor};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Produces normalized feature tensors for manifest entries, consulting the
/// on-disk raw-dB cache (single precision only) and an optional memory cache.
pub struct FeatureSource<T> {
    extractor: FeatureExtractor<T>,
    disk: Option<FeatureCache>,
    memory: Option<Mutex<HashMap<PathBuf, Arc<[T]>>>>,
}

impl<T: Scalar> FeatureSource<T> {
    pub fn new(cfg: FeatureConfig) -> Result<Self, FeatureError> {
        Ok(Self { extractor: FeatureExtractor::new(cfg)?, disk: None, memory: None })
    }

    /// Reads and fills `dir/<fingerprint>/...`. The cache stores `f32`, so it
    /// is ignored in double precision to keep that mode bit-exact.
    pub fn with_disk_cache(mut self, dir: PathBuf) -> Self {
        if T::SINGLE {
            self.disk = Some(FeatureCache::new(&dir, self.extractor.config()));
        } else {
            log::info!("feature cache disabled in {} mode", T::NAME);
        }
        self
    }

    pub fn with_memory_cache(mut self, on: bool) -> Self {
        self.memory = on.then(|| Mutex::new(HashMap::new()));
        self
    }

    pub fn extractor(&self) -> &FeatureExtractor<T> {
        &self.extractor
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.extractor.shape()
    }

    /// Un-augmented raw-dB tensor, from the disk cache when possible.
    pub fn raw_db(&self, entry: &ManifestEntry) -> Result<SpectrogramTensor<T>, FeatureError> {
        if let Some(cache) = &self.disk {
            if let Some(hit) = cache.get(entry) {
                if hit.shape() == self.shape() {
                    return Ok(hit.cast());
                }
                log::warn!("cache entry for {} has the wrong shape; recomputing", entry.file_name);
            }
            let raw = self.extractor.raw_db_from_path(&entry.path)?;
            cache.put(entry, &raw.cast())?;
            return Ok(raw);
        }
        self.extractor.raw_db_from_path(&entry.path)
    }

    /// Normalized, un-augmented features.
    pub fn clean(&self, entry: &ManifestEntry) -> Result<Arc<[T]>, FeatureError> {
        if let Some(mem) = &self.memory {
            if let Some(hit) = mem.lock().unwrap().get(&entry.path) {
                return Ok(hit.clone());
            }
        }
        let data: Arc<[T]> = self.extractor.finish(self.raw_db(entry)?, None).into_data().into();
        if let Some(mem) = &self.memory {
            mem.lock().unwrap().insert(entry.path.clone(), data.clone());
        }
        Ok(data)
    }

    /// Features with augmentation drawn from `rng`. Falls back to
    /// [`Self::clean`] when augmentation is disabled.
    pub fn augmented(&self, entry: &ManifestEntry, aug: &AugmentConfig, rng: &mut Rng) -> Result<Arc<[T]>, FeatureError> {
        if !aug.enabled {
            return self.clean(entry);
        }
        Ok(self.extractor.extract_features(&entry.path, Some((aug, rng)))?.into_data().into())
    }
}
