//! Waveform standardization (rate, channels, length) and time-shift
//! augmentation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioClip;
use crate::scalar::{count, Scalar};

pub const TARGET_SAMPLE_RATE_HZ: u32 = 44_100;
/// 4 s at 44.1 kHz.
pub const TARGET_SAMPLES: usize = 176_400;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DspError {
    #[error("clip has an empty channel")]
    EmptyChannel,
    #[error("target sample rate must be positive")]
    InvalidRate,
    #[error("target length must be positive")]
    InvalidLength,
    #[error("expected 1 or 2 channels, got {0}")]
    UnsupportedChannels(usize),
}

/// Canonical waveform shape every clip is converted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StandardFormat {
    pub sample_rate_hz: u32,
    pub samples: usize,
}

impl Default for StandardFormat {
    fn default() -> Self {
        Self { sample_rate_hz: TARGET_SAMPLE_RATE_HZ, samples: TARGET_SAMPLES }
    }
}

/// Augmentation knobs. Time shift acts on the waveform, masks on the
/// spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Maximum circular shift as a fraction of the clip length.
    pub shift_limit: f64,
    /// Widest frequency mask, in mel bins.
    pub freq_mask_max: usize,
    /// Widest time mask, in frames.
    pub time_mask_max: usize,
    pub n_freq_masks: usize,
    pub n_time_masks: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { enabled: true, shift_limit: 0.4, freq_mask_max: 6, time_mask_max: 34, n_freq_masks: 1, n_time_masks: 1 }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.shift_limit) {
            return Err(format!("shift_limit {} must lie in [0, 1]", self.shift_limit));
        }
        Ok(())
    }
}

/// A stereo clip at the canonical rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardClip<T> {
    channels: [Vec<T>; 2],
    sample_rate_hz: u32,
}

impl<T: Scalar> StandardClip<T> {
    pub fn channels(&self) -> &[Vec<T>; 2] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Back to a plain clip (e.g. to re-standardize).
    pub fn to_clip(&self) -> AudioClip<T> {
        AudioClip::new(self.channels.to_vec(), self.sample_rate_hz).expect("standard clip is valid")
    }
}

fn check_non_empty<T: Scalar>(clip: &AudioClip<T>) -> Result<(), DspError> {
    if clip.is_empty() {
        Err(DspError::EmptyChannel)
    } else {
        Ok(())
    }
}

fn resample_channel<T: Scalar>(x: &[T], src: u64, dst: u64) -> Vec<T> {
    let n = x.len() as u64;
    let out_len = ((2 * n * dst + src) / (2 * src)) as usize;
    let dst_t = count::<T>(dst as usize);
    (0..out_len as u64)
        .map(|i| {
            let num = i * src;
            let j = (num / dst) as usize;
            let rem = num % dst;
            if j + 1 >= x.len() {
                x[x.len() - 1]
            } else if rem == 0 {
                x[j]
            } else {
                let frac = count::<T>(rem as usize) / dst_t;
                x[j] + frac * (x[j + 1] - x[j])
            }
        })
        .collect()
}

/// Linear-interpolation resampler. Output sample `i` reads the input at
/// position `i * source / target`; positions past the last input sample
/// hold the last value. Output length is `round(n * target / source)`.
pub fn resample<T: Scalar>(clip: &AudioClip<T>, target_hz: u32) -> Result<AudioClip<T>, DspError> {
    if target_hz == 0 {
        return Err(DspError::InvalidRate);
    }
    check_non_empty(clip)?;
    let src = clip.sample_rate_hz();
    if src == target_hz {
        return Ok(clip.clone());
    }
    let channels =
        clip.channels().iter().map(|c| resample_channel(c, src as u64, target_hz as u64)).collect::<Vec<_>>();
    if channels[0].is_empty() {
        return Err(DspError::EmptyChannel);
    }
    Ok(AudioClip::new(channels, target_hz).expect("equal-length channels"))
}

/// Mono is duplicated into two channels; stereo passes through.
pub fn rechannel<T: Scalar>(clip: &AudioClip<T>, target_channels: usize) -> Result<AudioClip<T>, DspError> {
    let n = clip.channel_count();
    if !(1..=2).contains(&n) {
        return Err(DspError::UnsupportedChannels(n));
    }
    if n == target_channels {
        return Ok(clip.clone());
    }
    if n == 1 && target_channels == 2 {
        let mono = clip.channels()[0].clone();
        return Ok(AudioClip::new(vec![mono.clone(), mono], clip.sample_rate_hz()).expect("valid"));
    }
    Err(DspError::UnsupportedChannels(target_channels))
}

/// Truncates to the first `target_len` samples or zero-pads at the end.
pub fn fix_length<T: Scalar>(clip: &AudioClip<T>, target_len: usize) -> Result<AudioClip<T>, DspError> {
    if target_len == 0 {
        return Err(DspError::InvalidLength);
    }
    check_non_empty(clip)?;
    let channels = clip
        .channels()
        .iter()
        .map(|c| {
            let mut out = c.clone();
            out.resize(target_len, T::zero());
            out
        })
        .collect();
    Ok(AudioClip::new(channels, clip.sample_rate_hz()).expect("valid"))
}

/// Resample, then rechannel to stereo, then fix the length.
pub fn standardize<T: Scalar>(clip: &AudioClip<T>, format: StandardFormat) -> Result<StandardClip<T>, DspError> {
    check_non_empty(clip)?;
    let clip = resample(clip, format.sample_rate_hz)?;
    let clip = rechannel(&clip, 2)?;
    let clip = fix_length(&clip, format.samples)?;
    let mut it = clip.into_channels().into_iter();
    let (left, right) = (it.next().expect("two channels"), it.next().expect("two channels"));
    Ok(StandardClip { channels: [left, right], sample_rate_hz: format.sample_rate_hz })
}

/// Circularly rotates both channels right by `shift` samples (left when
/// negative).
pub fn shift_by<T: Scalar>(clip: &StandardClip<T>, shift: i64) -> StandardClip<T> {
    let len = clip.len() as i64;
    let k = shift.rem_euclid(len) as usize;
    let mut out = clip.clone();
    for ch in out.channels.iter_mut() {
        ch.rotate_right(k);
    }
    out
}

/// Draws `s` uniformly from `[-floor(limit * L), floor(limit * L)]`.
pub fn draw_shift<R: Rng + ?Sized>(len: usize, shift_limit: f64, rng: &mut R) -> i64 {
    let max = (shift_limit.clamp(0.0, 1.0) * len as f64).floor() as i64;
    if max == 0 {
        0
    } else {
        rng.random_range(-max..=max)
    }
}

/// Random signed circular time shift, the same for both channels.
pub fn time_shift<T: Scalar, R: Rng + ?Sized>(clip: &StandardClip<T>, shift_limit: f64, rng: &mut R) -> StandardClip<T> {
    let s = draw_shift(clip.len(), shift_limit, rng);
    shift_by(clip, s)
}
