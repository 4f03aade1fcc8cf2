//! HTK-style mel scale and triangular filterbank.

use super::FeatureError;
use crate::scalar::Scalar;

/// `2595 log10(1 + f / 700)`.
pub fn hz_to_mel(f_hz: f64) -> Result<f64, FeatureError> {
    if f_hz < 0.0 || f_hz.is_nan() {
        return Err(FeatureError::NegativeFrequency(f_hz));
    }
    Ok(2595.0 * (1.0 + f_hz / 700.0).log10())
}

/// Inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> Result<f64, FeatureError> {
    if mel < 0.0 || mel.is_nan() {
        return Err(FeatureError::NegativeFrequency(mel));
    }
    Ok(700.0 * (10f64.powf(mel / 2595.0) - 1.0))
}

/// Dense `[n_mels x n_bins]` triangular filter weights.
///
/// Row `m` rises linearly from edge `m` to edge `m + 1` and falls to edge
/// `m + 2`; the `n_mels + 2` edges are equally spaced in mel between
/// `f_min` and `f_max`. Filters are not area-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank<T> {
    pub n_mels: usize,
    pub n_bins: usize,
    pub sample_rate_hz: u32,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    /// Edge frequencies in Hz, length `n_mels + 2`.
    pub edges_hz: Vec<f64>,
    weights: Vec<T>,
    /// Half-open nonzero bin range per row.
    supports: Vec<(usize, usize)>,
}

impl<T: Scalar> MelFilterbank<T> {
    pub fn new(
        n_mels: usize,
        n_bins: usize,
        sample_rate_hz: u32,
        f_min_hz: f64,
        f_max_hz: f64,
    ) -> Result<Self, FeatureError> {
        if n_mels == 0 || n_bins < 2 {
            return Err(FeatureError::InvalidConfig(format!("filterbank needs n_mels >= 1 and n_bins >= 2, got {n_mels}/{n_bins}")));
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        if f_max_hz > nyquist {
            return Err(FeatureError::InvalidConfig(format!("f_max {f_max_hz} Hz exceeds Nyquist {nyquist} Hz")));
        }
        if f_min_hz >= f_max_hz {
            return Err(FeatureError::InvalidConfig(format!("f_min {f_min_hz} must be below f_max {f_max_hz}")));
        }
        let (lo, hi) = (hz_to_mel(f_min_hz)?, hz_to_mel(f_max_hz)?);
        let edges_hz = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect::<Result<Vec<_>, _>>()?;
        let n_fft = 2 * (n_bins - 1);
        let bin_hz = |k: usize| k as f64 * sample_rate_hz as f64 / n_fft as f64;

        let mut weights = vec![T::zero(); n_mels * n_bins];
        let mut supports = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            let mut support = (usize::MAX, 0);
            for k in 0..n_bins {
                let f = bin_hz(k);
                let rising = (f - left) / (center - left);
                let falling = (right - f) / (right - center);
                let w = rising.min(falling).max(0.0);
                if w > 0.0 {
                    weights[m * n_bins + k] = T::from_f64(w).unwrap();
                    support = (support.0.min(k), k + 1);
                }
            }
            if support.0 == usize::MAX {
                support = (0, 0);
            }
            supports.push(support);
        }
        Ok(Self { n_mels, n_bins, sample_rate_hz, f_min_hz, f_max_hz, edges_hz, weights, supports })
    }

    /// The default 64-band bank for a 1024-point FFT at 44.1 kHz, 0 Hz to Nyquist.
    pub fn standard() -> Self {
        Self::new(64, 513, 44_100, 0.0, 22_050.0).expect("valid defaults")
    }

    pub fn weight(&self, mel: usize, bin: usize) -> T {
        self.weights[mel * self.n_bins + bin]
    }

    pub fn row(&self, mel: usize) -> &[T] {
        &self.weights[mel * self.n_bins..(mel + 1) * self.n_bins]
    }

    pub fn support(&self, mel: usize) -> (usize, usize) {
        self.supports[mel]
    }

    /// Centre frequencies (edges `1..=n_mels`).
    pub fn centers_hz(&self) -> &[f64] {
        &self.edges_hz[1..=self.n_mels]
    }

    /// Projects one frame of `n_bins` power values onto the mel bands.
    pub fn apply_frame(&self, power: &[T], out: &mut [T]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (m, slot) in out.iter_mut().enumerate() {
            let (a, b) = self.supports[m];
            let row = &self.weights[m * self.n_bins..];
            *slot = (a..b).fold(T::zero(), |acc, k| acc + row[k] * power[k]);
        }
    }
}

/// `n_mels` filters over `n_fft_bins` bins at `sr`, spanning 0 Hz to Nyquist.
pub fn build_mel_filterbank<T: Scalar>(n_mels: usize, n_fft_bins: usize, sr: u32) -> Result<MelFilterbank<T>, FeatureError> {
    MelFilterbank::new(n_mels, n_fft_bins, sr, 0.0, sr as f64 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_formula() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        assert!((hz_to_mel(700.0).unwrap() - 781.1728).abs() < 1e-4);
        assert!((hz_to_mel(700.0).unwrap() - 2595.0 * 2f64.log10()).abs() < 1e-12);
        for f in [100.0, 1000.0, 10000.0] {
            let back = mel_to_hz(hz_to_mel(f).unwrap()).unwrap();
            assert!(((back - f) / f).abs() < 1e-9);
        }
        assert!(matches!(hz_to_mel(-1.0), Err(FeatureError::NegativeFrequency(_))));
    }

    #[test]
    fn standard_bank_shape_and_rows() {
        let fb: MelFilterbank<f64> = MelFilterbank::standard();
        assert_eq!((fb.n_mels, fb.n_bins, fb.edges_hz.len()), (64, 513, 66));
        assert!((fb.edges_hz[65] - 22050.0).abs() < 1e-6);
        for m in 0..64 {
            let row = fb.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().cloned().fold(0.0, f64::max) > 0.0, "row {m} empty");
            // support is one contiguous run
            let nz: Vec<usize> = (0..513).filter(|&k| row[k] > 0.0).collect();
            assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len(), "row {m} not contiguous");
            assert_eq!(fb.support(m), (nz[0], nz.last().unwrap() + 1));
            // zero outside [edge_m, edge_{m+2}]
            for (k, &w) in row.iter().enumerate() {
                let f = k as f64 * 44100.0 / 1024.0;
                if f <= fb.edges_hz[m] || f >= fb.edges_hz[m + 2] {
                    assert_eq!(w, 0.0);
                }
            }
            if m > 0 {
                assert!(fb.support(m).0 >= fb.support(m - 1).0);
                assert!(fb.centers_hz()[m] > fb.centers_hz()[m - 1]);
            }
        }
    }

    #[test]
    fn rejects_fmax_above_nyquist() {
        assert!(MelFilterbank::<f32>::new(64, 513, 44100, 0.0, 30000.0).is_err());
        assert!(build_mel_filterbank::<f32>(0, 513, 44100).is_err());
    }

    #[test]
    fn apply_frame_matches_dense_product() {
        let fb: MelFilterbank<f64> = build_mel_filterbank(16, 129, 16000).unwrap();
        let power: Vec<f64> = (0..129).map(|k| ((k * 37) % 11) as f64).collect();
        let mut out = vec![0.0; 16];
        fb.apply_frame(&power, &mut out);
        for m in 0..16 {
            let dense: f64 = fb.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
            assert!((dense - out[m]).abs() < 1e-12);
        }
    }
}
