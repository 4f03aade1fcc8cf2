//! On-disk cache of un-augmented raw-dB spectrograms.
//!
//! File layout (little-endian): magic `USFC`, `u16` version, three `u32`
//! dims `[channels, mels, frames]`, then `f32` values row-major
//! `[channel][mel][frame]`.

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{FeatureConfig, FeatureError, SpectrogramTensor, Stage};
use crate::dataset::ManifestEntry;

pub const CACHE_MAGIC: &[u8; 4] = b"USFC";
pub const CACHE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 12;

pub fn encode_cache(spec: &SpectrogramTensor<f32>) -> Vec<u8> {
    let (c, m, f) = spec.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + spec.data().len() * 4);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    for d in [c, m, f] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in spec.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_cache(bytes: &[u8]) -> Result<SpectrogramTensor<f32>, FeatureError> {
    let bad = |msg: &str| FeatureError::Cache(msg.to_string());
    if bytes.len() < HEADER_LEN || &bytes[..4] != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CACHE_VERSION {
        return Err(FeatureError::Cache(format!("unsupported version {version}")));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
    let shape = (dim(0), dim(1), dim(2));
    let n = shape.0 * shape.1 * shape.2;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != n * 4 {
        return Err(bad("payload length does not match shape"));
    }
    let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    SpectrogramTensor::new(data, shape, Stage::RawDb)
}

/// Writes via a temporary file and an atomic rename.
pub fn write_cache_file(path: &Path, spec: &SpectrogramTensor<f32>) -> Result<(), FeatureError> {
    let io = |e| FeatureError::Io { path: path.to_path_buf(), source: e };
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(&encode_cache(spec)).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn read_cache_file(path: &Path) -> Result<SpectrogramTensor<f32>, FeatureError> {
    let bytes = std::fs::read(path).map_err(|e| FeatureError::Io { path: path.to_path_buf(), source: e })?;
    decode_cache(&bytes)
}

/// A cache directory scoped to one feature configuration: entries live in
/// `<dir>/<config fingerprint>/fold<N>/<file>.usfc`.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    root: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: &Path, cfg: &FeatureConfig) -> Self {
        Self { root: dir.join(fingerprint(cfg)) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(format!("fold{}", entry.fold)).join(format!("{}.usfc", entry.file_name))
    }

    /// Cached tensor, or `None` when absent or unreadable.
    pub fn get(&self, entry: &ManifestEntry) -> Option<SpectrogramTensor<f32>> {
        let path = self.path_for(entry);
        if !path.is_file() {
            return None;
        }
        match read_cache_file(&path) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("ignoring unreadable cache file {}: {e}", path.display());
                None
            }
        }
    }

    pub fn put(&self, entry: &ManifestEntry, spec: &SpectrogramTensor<f32>) -> Result<(), FeatureError> {
        write_cache_file(&self.path_for(entry), spec)
    }
}

/// Short hash identifying a feature configuration.
pub fn fingerprint(cfg: &FeatureConfig) -> String {
    let json = serde_json::to_string(cfg).expect("serializable config");
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bit_exact() {
        let data: Vec<f32> = (0..2 * 3 * 5).map(|i| (i as f32).sqrt() - 2.5).collect();
        let spec = SpectrogramTensor::new(data, (2, 3, 5), Stage::RawDb).unwrap();
        let bytes = encode_cache(&spec);
        assert_eq!(&bytes[..4], b"USFC");
        assert_eq!(bytes.len(), 18 + 30 * 4);
        let back = decode_cache(&bytes).unwrap();
        assert_eq!(back.shape(), (2, 3, 5));
        assert!(back.data().iter().zip(spec.data()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.usfc");
        write_cache_file(&path, &spec).unwrap();
        assert_eq!(read_cache_file(&path).unwrap().data(), spec.data());
    }

    #[test]
    fn rejects_corruption() {
        let spec = SpectrogramTensor::new(vec![1.0f32; 8], (2, 2, 2), Stage::RawDb).unwrap();
        let bytes = encode_cache(&spec);
        assert!(decode_cache(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_cache(&wrong).is_err());
        let mut ver = bytes;
        ver[4] = 9;
        assert!(decode_cache(&ver).is_err());
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = FeatureConfig::default();
        let b = FeatureConfig { n_mels: 32, ..a };
        assert_eq!(fingerprint(&a), fingerprint(&a));
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 16);
    }
}
