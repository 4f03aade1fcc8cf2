use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::fft::FftPlan;
use super::FeatureError;
use crate::scalar::{lit, Scalar};

/// Short-time Fourier transform settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    /// Reflect-pad `n_fft / 2` samples on both sides so frame `t` is
    /// centred on sample `t * hop`.
    pub center: bool,
    /// Discard the final frame. With centring, a 176400-sample clip gives
    /// `1 + 176400 / 512 = 345` frames; dropping one yields 344.
    pub drop_last_frame: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { n_fft: 1024, hop: 512, center: true, drop_last_frame: true }
    }
}

impl StftConfig {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for an input of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let raw = if self.center {
            1 + len / self.hop
        } else if len >= self.n_fft {
            1 + (len - self.n_fft) / self.hop
        } else {
            0
        };
        if self.drop_last_frame {
            raw.saturating_sub(1)
        } else {
            raw
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(FeatureError::NotPowerOfTwo(self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(FeatureError::InvalidConfig(format!("hop {} must be in 1..={}", self.hop, self.n_fft)));
        }
        Ok(())
    }
}

/// Periodic Hann window, `0.5 - 0.5 cos(2 pi n / N)`.
pub fn hann_window<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| lit::<T>(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Complex STFT, stored frame-major: `data[frame * bins + bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn at(&self, bin: usize, frame: usize) -> Complex<T> {
        self.data[frame * self.bins + bin]
    }

    /// `|X|^2`, frame-major like `data`.
    pub fn power(&self) -> Vec<T> {
        self.data.iter().map(|z| z.norm_sqr()).collect()
    }
}

fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut i = i;
    // single reflection suffices because pad < len is checked by the caller
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Reusable STFT state: window and FFT plan.
#[derive(Debug, Clone)]
pub struct Stft<T> {
    cfg: StftConfig,
    window: Vec<T>,
    plan: FftPlan<T>,
}

impl<T: Scalar> Stft<T> {
    pub fn new(cfg: StftConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        Ok(Self { cfg, window: hann_window(cfg.n_fft), plan: FftPlan::new(cfg.n_fft)? })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Hann-windowed frames every `hop` samples, bins `0..=n_fft/2`.
    pub fn transform(&self, x: &[T]) -> Result<Spectrum<T>, FeatureError> {
        let n_fft = self.cfg.n_fft;
        let pad = if self.cfg.center { n_fft / 2 } else { 0 };
        if x.len() <= pad || (!self.cfg.center && x.len() < n_fft) {
            return Err(FeatureError::WrongLength { expected: pad.max(n_fft) + 1, got: x.len() });
        }
        let bins = self.cfg.n_bins();
        let frames = self.cfg.frame_count(x.len());
        let mut data = Vec::with_capacity(bins * frames);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];
        for t in 0..frames {
            let origin = (t * self.cfg.hop) as isize - pad as isize;
            for (j, slot) in buf.iter_mut().enumerate() {
                let idx = origin + j as isize;
                let sample = if pad > 0 { x[reflect_index(idx, x.len())] } else { x[idx as usize] };
                *slot = Complex::new(sample * self.window[j], T::zero());
            }
            self.plan.forward(&mut buf);
            data.extend_from_slice(&buf[..bins]);
        }
        Ok(Spectrum { bins, frames, data })
    }
}

/// One-shot STFT of a single channel.
pub fn stft<T: Scalar>(x: &[T], cfg: StftConfig) -> Result<Spectrum<T>, FeatureError> {
    Stft::new(cfg)?.transform(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::TARGET_SAMPLES;

    #[test]
    fn frame_count_for_four_seconds() {
        let cfg = StftConfig::default();
        assert_eq!(StftConfig { drop_last_frame: false, ..cfg }.frame_count(TARGET_SAMPLES), 345);
        assert_eq!(cfg.frame_count(TARGET_SAMPLES), 344);
        let s = stft(&vec![0.0f32; TARGET_SAMPLES], cfg).unwrap();
        assert_eq!((s.bins, s.frames), (513, 344));
        assert!(s.data.iter().all(|z| z.norm_sqr() == 0.0));
    }

    #[test]
    fn sinusoid_peaks_at_bin_23() {
        // 1000 * 1024 / 44100 = 23.2; a cosine stays continuous under the reflect padding
        let x: Vec<f64> = (0..TARGET_SAMPLES)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 44100.0).cos())
            .collect();
        let s = stft(&x, StftConfig::default()).unwrap();
        for t in 0..s.frames {
            let peak = (0..s.bins).max_by(|&a, &b| s.at(a, t).norm().total_cmp(&s.at(b, t).norm())).unwrap();
            assert_eq!(peak, 23, "frame {t}");
        }
    }

    #[test]
    fn reflect_padding_matches_definition() {
        // frame 0 of a centred STFT sees x[pad], ..., x[1], x[0], x[1], ...
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let cfg = StftConfig { n_fft: 8, hop: 4, center: true, drop_last_frame: false };
        let s = stft(&x, cfg).unwrap();
        let w: Vec<f64> = hann_window(8);
        let frame0: Vec<f64> = [4.0, 3.0, 2.0, 1.0, 0.0, 1.0, 2.0, 3.0].iter().zip(&w).map(|(a, b)| a * b).collect();
        let dc: f64 = frame0.iter().sum();
        assert!((s.at(0, 0).re - dc).abs() < 1e-12);
        assert_eq!(s.frames, 5);
        let last: Vec<f64> = [12.0, 13.0, 14.0, 15.0, 14.0, 13.0, 12.0, 11.0].iter().zip(&w).map(|(a, b)| a * b).collect();
        assert!((s.at(0, 4).re - last.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_input_and_bad_config() {
        assert!(matches!(stft(&[0.0f32; 100], StftConfig::default()), Err(FeatureError::WrongLength { .. })));
        let bad = StftConfig { n_fft: 1000, ..StftConfig::default() };
        assert!(matches!(stft(&[0.0f32; 4000], bad), Err(FeatureError::NotPowerOfTwo(1000))));
    }

    #[test]
    fn hann_is_periodic() {
        let w: Vec<f64> = hann_window(4);
        for (a, b) in w.iter().zip([0.0, 0.5, 1.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
