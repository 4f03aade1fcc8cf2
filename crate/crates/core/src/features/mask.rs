//! Frequency and time masking on spectrogram tensors.

use rand::Rng;

use super::{SpectrogramTensor, Stage};
use crate::dsp::AugmentConfig;
use crate::scalar::Scalar;

fn draw_band<R: Rng + ?Sized>(dim: usize, max_width: usize, rng: &mut R) -> (usize, usize) {
    let max_width = max_width.min(dim);
    let w = rng.random_range(0..=max_width);
    let start = rng.random_range(0..=dim - w);
    (start, w)
}

/// Fills `width` mel rows from `start` (all channels, all frames) with `fill`.
pub fn fill_mel_band<T: Scalar>(spec: &mut SpectrogramTensor<T>, start: usize, width: usize, fill: T) {
    let (c, m, f) = spec.shape();
    for ch in 0..c {
        for mel in start..(start + width).min(m) {
            let base = (ch * m + mel) * f;
            spec.data_mut()[base..base + f].iter_mut().for_each(|v| *v = fill);
        }
    }
}

/// Fills `width` frames from `start` (all channels, all mel bins) with `fill`.
pub fn fill_frame_band<T: Scalar>(spec: &mut SpectrogramTensor<T>, start: usize, width: usize, fill: T) {
    let (c, m, f) = spec.shape();
    let end = (start + width).min(f);
    for ch in 0..c {
        for mel in 0..m {
            let base = (ch * m + mel) * f;
            spec.data_mut()[base + start..base + end].iter_mut().for_each(|v| *v = fill);
        }
    }
}

/// One frequency mask: width uniform in `[0, max_width]`, start uniform
/// over the valid range, filled with the tensor mean. Returns `(start, width)`.
pub fn freq_mask<T: Scalar, R: Rng + ?Sized>(spec: &mut SpectrogramTensor<T>, max_width: usize, rng: &mut R) -> (usize, usize) {
    let fill = spec.mean();
    let band = draw_band(spec.shape().1, max_width, rng);
    fill_mel_band(spec, band.0, band.1, fill);
    spec.set_stage(Stage::Masked);
    band
}

/// One time mask; see [`freq_mask`].
pub fn time_mask<T: Scalar, R: Rng + ?Sized>(spec: &mut SpectrogramTensor<T>, max_width: usize, rng: &mut R) -> (usize, usize) {
    let fill = spec.mean();
    let band = draw_band(spec.shape().2, max_width, rng);
    fill_frame_band(spec, band.0, band.1, fill);
    spec.set_stage(Stage::Masked);
    band
}

/// Applies the configured frequency masks, then time masks. The fill value
/// is the tensor mean taken once, before any mask.
pub fn apply_masks<T: Scalar, R: Rng + ?Sized>(spec: &mut SpectrogramTensor<T>, cfg: &AugmentConfig, rng: &mut R) {
    let fill = spec.mean();
    let (_, m, f) = spec.shape();
    for _ in 0..cfg.n_freq_masks {
        let (start, w) = draw_band(m, cfg.freq_mask_max, rng);
        fill_mel_band(spec, start, w, fill);
    }
    for _ in 0..cfg.n_time_masks {
        let (start, w) = draw_band(f, cfg.time_mask_max, rng);
        fill_frame_band(spec, start, w, fill);
    }
    spec.set_stage(Stage::Masked);
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn ramp(c: usize, m: usize, f: usize) -> SpectrogramTensor<f64> {
        let data = (0..c * m * f).map(|i| (i as f64 * 0.37).sin() * 40.0 - 20.0).collect();
        SpectrogramTensor::new(data, (c, m, f), Stage::RawDb).unwrap()
    }

    #[test]
    fn zero_width_is_identity() {
        let orig = ramp(2, 64, 344);
        let mut rng = stream_rng(0, Stream::Init);
        let mut s = orig.clone();
        freq_mask(&mut s, 0, &mut rng);
        time_mask(&mut s, 0, &mut rng);
        assert_eq!(s.data(), orig.data());
    }

    #[test]
    fn freq_mask_makes_w_constant_rows() {
        let orig = ramp(2, 64, 344);
        for seed in 0..20 {
            let mut s = orig.clone();
            let mut rng = stream_rng(seed, Stream::Init);
            let (start, w) = freq_mask(&mut s, 6, &mut rng);
            assert!(w <= 6 && start + w <= 64);
            for ch in 0..2 {
                let constant = (0..64)
                    .filter(|&m| {
                        let row: Vec<f64> = (0..344).map(|t| s.get(ch, m, t)).collect();
                        row.iter().all(|&v| v == row[0])
                    })
                    .count();
                assert_eq!(constant, w);
            }
            for ch in 0..2 {
                for m in (0..64).filter(|m| *m < start || *m >= start + w) {
                    for t in 0..344 {
                        assert_eq!(s.get(ch, m, t).to_bits(), orig.get(ch, m, t).to_bits());
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn masking_changes_a_bounded_number_of_values(seed in any::<u64>(), nf in 0usize..3, nt in 0usize..3) {
            let orig = ramp(2, 64, 344);
            let mut s = orig.clone();
            let cfg = AugmentConfig { n_freq_masks: nf, n_time_masks: nt, ..AugmentConfig::default() };
            apply_masks(&mut s, &cfg, &mut stream_rng(seed, Stream::Init));
            let changed = s.data().iter().zip(orig.data()).filter(|(a, b)| a != b).count();
            prop_assert!(changed <= (nf * 6 * 344 + nt * 34 * 64) * 2);
            prop_assert_eq!(s.stage(), Stage::Masked);
        }
    }
}
