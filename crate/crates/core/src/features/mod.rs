//! Mel-spectrogram features: waveform in, normalized `[2, 64, 344]` tensor out.
//!
//! The pipeline for one file is decode, standardize, optional time shift,
//! log-mel spectrogram, optional frequency/time masks, per-example
//! normalization.

pub mod cache;
pub mod fft;
pub mod mask;
pub mod mel;
pub mod normalize;
pub mod stft;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{decode_wav, AudioClip, WavError};
use crate::dsp::{self, AugmentConfig, DspError, StandardClip, StandardFormat};
use crate::rng::Rng;
use crate::scalar::{lit, Scalar};

pub use cache::FeatureCache;
pub use fft::{fft, FftPlan};
pub use mask::{apply_masks, freq_mask, time_mask};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, MelFilterbank};
pub use normalize::{normalize, NormalizationStats};
pub use stft::{stft, Spectrum, Stft, StftConfig};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("FFT length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("negative frequency {0}")]
    NegativeFrequency(f64),
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} samples, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("tensor shape {shape:?} does not hold {len} values")]
    BadShape { shape: (usize, usize, usize), len: usize },
    #[error("feature cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: Box<FeatureError> },
}

impl FeatureError {
    fn at(self, path: &Path) -> Self {
        match self {
            e @ (FeatureError::Io { .. } | FeatureError::File { .. }) => e,
            e => FeatureError::File { path: path.to_path_buf(), source: Box::new(e) },
        }
    }
}

/// Processing stage of a [`SpectrogramTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    RawDb,
    Masked,
    Normalized,
}

/// `[channels, mel bins, frames]` row-major feature image.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramTensor<T> {
    data: Vec<T>,
    shape: (usize, usize, usize),
    stage: Stage,
}

impl<T: Scalar> SpectrogramTensor<T> {
    pub fn new(data: Vec<T>, shape: (usize, usize, usize), stage: Stage) -> Result<Self, FeatureError> {
        if shape.0 * shape.1 * shape.2 != data.len() {
            return Err(FeatureError::BadShape { shape, len: data.len() });
        }
        Ok(Self { data, shape, stage })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub(crate) fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, channel: usize, mel: usize, frame: usize) -> T {
        let (_, m, f) = self.shape;
        self.data[(channel * m + mel) * f + frame]
    }

    pub fn mean(&self) -> T {
        let sum: f64 = self.data.iter().map(|v| v.to_f64().unwrap()).sum();
        lit(sum / self.data.len().max(1) as f64)
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    /// Converts element type (the cache stores `f32`).
    pub fn cast<U: Scalar>(&self) -> SpectrogramTensor<U> {
        SpectrogramTensor {
            data: self.data.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
            shape: self.shape,
            stage: self.stage,
        }
    }
}

/// Everything that determines the un-augmented feature tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub format: StandardFormat,
    pub stft: StftConfig,
    pub n_mels: usize,
    pub f_min_hz: f64,
    /// Upper filterbank edge; Nyquist when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_max_hz: Option<f64>,
    /// dB values are floored at `max - top_db` over the whole tensor.
    pub top_db: f64,
    /// Power floor before the logarithm.
    pub amin: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            format: StandardFormat::default(),
            stft: StftConfig::default(),
            n_mels: 64,
            f_min_hz: 0.0,
            f_max_hz: None,
            top_db: 80.0,
            amin: 1e-10,
        }
    }
}

impl FeatureConfig {
    /// `(channels, mel bins, frames)` of the produced tensor.
    pub fn shape(&self) -> (usize, usize, usize) {
        (2, self.n_mels, self.stft.frame_count(self.format.samples))
    }

    pub fn f_max(&self) -> f64 {
        self.f_max_hz.unwrap_or(self.format.sample_rate_hz as f64 / 2.0)
    }

    /// Checks the masks against the 10%-of-dimension limit.
    pub fn check_augment(&self, aug: &AugmentConfig) -> Result<(), FeatureError> {
        aug.validate().map_err(FeatureError::InvalidConfig)?;
        let (_, m, f) = self.shape();
        if aug.freq_mask_max > m / 10 || aug.time_mask_max > f / 10 {
            return Err(FeatureError::InvalidConfig(format!(
                "mask widths ({}, {}) exceed 10% of ({m}, {f})",
                aug.freq_mask_max, aug.time_mask_max
            )));
        }
        Ok(())
    }
}

/// Feature pipeline with its window, FFT plan and filterbank prepared once.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<T> {
    cfg: FeatureConfig,
    stft: Stft<T>,
    filterbank: MelFilterbank<T>,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn new(cfg: FeatureConfig) -> Result<Self, FeatureError> {
        if cfg.format.samples == 0 || cfg.format.sample_rate_hz == 0 {
            return Err(FeatureError::InvalidConfig("empty standard format".into()));
        }
        let stft = Stft::new(cfg.stft)?;
        let filterbank =
            MelFilterbank::new(cfg.n_mels, cfg.stft.n_bins(), cfg.format.sample_rate_hz, cfg.f_min_hz, cfg.f_max())?;
        if cfg.shape().2 == 0 {
            return Err(FeatureError::InvalidConfig("configuration yields zero frames".into()));
        }
        Ok(Self { cfg, stft, filterbank })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank<T> {
        &self.filterbank
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.cfg.shape()
    }

    pub fn standardize(&self, clip: &AudioClip<T>) -> Result<StandardClip<T>, FeatureError> {
        Ok(dsp::standardize(clip, self.cfg.format)?)
    }

    /// Log-mel power spectrogram of both channels. Power is projected
    /// through the filterbank, converted with `10 log10(max(p, amin))` and
    /// floored at `max - top_db` over the whole tensor.
    pub fn mel_spectrogram(&self, clip: &StandardClip<T>) -> Result<SpectrogramTensor<T>, FeatureError> {
        if clip.len() != self.cfg.format.samples {
            return Err(FeatureError::WrongLength { expected: self.cfg.format.samples, got: clip.len() });
        }
        let (c, m, f) = self.shape();
        let mut data = vec![T::zero(); c * m * f];
        let mut mel_frame = vec![T::zero(); m];
        let amin: T = lit(self.cfg.amin);
        let ten: T = lit(10.0);
        for (ch, samples) in clip.channels().iter().enumerate() {
            let spectrum = self.stft.transform(samples)?;
            debug_assert_eq!(spectrum.frames, f);
            let power = spectrum.power();
            for t in 0..f {
                self.filterbank.apply_frame(&power[t * spectrum.bins..(t + 1) * spectrum.bins], &mut mel_frame);
                for (mel, &p) in mel_frame.iter().enumerate() {
                    data[(ch * m + mel) * f + t] = ten * p.max(amin).log10();
                }
            }
        }
        let top = data.iter().copied().fold(T::neg_infinity(), T::max);
        let floor = top - lit(self.cfg.top_db);
        data.iter_mut().for_each(|v| *v = v.max(floor));
        SpectrogramTensor::new(data, (c, m, f), Stage::RawDb)
    }

    /// Raw-dB tensor of a decoded clip, without augmentation.
    pub fn raw_db(&self, clip: &AudioClip<T>) -> Result<SpectrogramTensor<T>, FeatureError> {
        self.mel_spectrogram(&self.standardize(clip)?)
    }

    /// Masks (when augmenting) and normalizes a raw-dB tensor.
    pub fn finish(
        &self,
        mut spec: SpectrogramTensor<T>,
        augment: Option<(&AugmentConfig, &mut Rng)>,
    ) -> SpectrogramTensor<T> {
        if let Some((aug, rng)) = augment {
            if aug.enabled {
                apply_masks(&mut spec, aug, rng);
            }
        }
        normalize(&spec).0
    }

    /// Full pipeline on a decoded clip.
    pub fn extract_clip(
        &self,
        clip: &AudioClip<T>,
        augment: Option<(&AugmentConfig, &mut Rng)>,
    ) -> Result<SpectrogramTensor<T>, FeatureError> {
        let mut standard = self.standardize(clip)?;
        match augment {
            Some((aug, rng)) if aug.enabled => {
                standard = dsp::time_shift(&standard, aug.shift_limit, rng);
                let raw = self.mel_spectrogram(&standard)?;
                Ok(self.finish(raw, Some((aug, rng))))
            }
            _ => Ok(self.finish(self.mel_spectrogram(&standard)?, None)),
        }
    }

    /// Decodes `path`.
    pub fn load(&self, path: &Path) -> Result<AudioClip<T>, FeatureError> {
        let bytes = std::fs::read(path).map_err(|e| FeatureError::Io { path: path.to_path_buf(), source: e })?;
        decode_wav(&bytes).map_err(|e| FeatureError::from(e).at(path))
    }

    /// Decode, standardize, augment (optionally), mel, normalize. Errors
    /// name the file.
    pub fn extract_features(
        &self,
        path: &Path,
        augment: Option<(&AugmentConfig, &mut Rng)>,
    ) -> Result<SpectrogramTensor<T>, FeatureError> {
        let clip = self.load(path)?;
        self.extract_clip(&clip, augment).map_err(|e| e.at(path))
    }

    /// Un-augmented raw-dB tensor of a file (the cacheable part).
    pub fn raw_db_from_path(&self, path: &Path) -> Result<SpectrogramTensor<T>, FeatureError> {
        let clip = self.load(path)?;
        self.raw_db(&clip).map_err(|e| e.at(path))
    }
}
