//! Urban sound classification from raw WAV files.
//!
//! The pipeline decodes a clip, standardizes it to 4 s of 44.1 kHz stereo,
//! turns each channel into a 64-band log-mel spectrogram (`[2, 64, 344]`),
//! and classifies it with a four-block CNN trained from scratch. All
//! numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod audio_io;
pub mod config;
pub mod dataset;
pub mod dsp;
pub mod features;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod train;

pub use config::RunConfig;
pub use dataset::{ClassSubset, DatasetManifest, ManifestEntry, SplitMode};
pub use dsp::AugmentConfig;
pub use features::{FeatureConfig, FeatureExtractor};
pub use nn::{Model, ModelConfig};
pub use scalar::Scalar;
pub use train::{TrainConfig, Trainer};

pub type AudioClip32 = audio_io::AudioClip<f32>;
pub type AudioClip64 = audio_io::AudioClip<f64>;
pub type SpectrogramTensor32 = features::SpectrogramTensor<f32>;
pub type SpectrogramTensor64 = features::SpectrogramTensor<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Model32 = nn::Model<f32>;
pub type Model64 = nn::Model<f64>;
pub type Checkpoint32 = nn::Checkpoint<f32>;
pub type Checkpoint64 = nn::Checkpoint<f64>;
