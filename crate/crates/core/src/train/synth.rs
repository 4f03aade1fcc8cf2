//! Tone-per-class corpus laid out like the real dataset, for testing
//! without the download.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use super::TrainError;
use crate::audio_io::{encode_wav_pcm16, AudioClip};
use crate::dataset::{load_manifest, DatasetManifest, CLASS_NAMES};
use crate::rng::{stream_rng, Stream};

/// Class ids in the order synthetic classes are assigned: the seven AV
/// classes first, so a 7-class corpus is exactly the `av7` subset.
const SYNTH_ORDER: [u8; 10] = [0, 1, 2, 3, 5, 6, 8, 4, 7, 9];
const RATES: [u32; 3] = [8_000, 22_050, 44_100];
const TONE_AMPLITUDE: f64 = 0.5;
const NOISE_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub seed: u64,
    pub classes: usize,
    pub per_class: usize,
}

pub fn synth_class_ids(classes: usize) -> Result<Vec<u8>, TrainError> {
    if !(1..=10).contains(&classes) {
        return Err(TrainError::Config(format!("synthetic corpus supports 1 to 10 classes, got {classes}")));
    }
    Ok(SYNTH_ORDER[..classes].to_vec())
}

/// `200 * 2^k` Hz for the `k`-th class. Beyond seven classes the octave
/// step shrinks so the highest tone stays at 12.8 kHz.
pub fn synth_frequency_hz(position: usize, classes: usize) -> f64 {
    let step = if classes <= 7 { 1.0 } else { 6.0 / (classes - 1) as f64 };
    200.0 * 2f64.powf(position as f64 * step)
}

/// Writes `per_class` clips for each of `classes` classes under `dir`
/// (`metadata/UrbanSound8K.csv`, `audio/fold*/`) and returns the parsed
/// manifest. Each clip is a tone plus uniform noise, 1 to 4 s long, at a
/// random rate that keeps the tone below 40% of the sampling rate, with one
/// or two channels.
pub fn make_synthetic_corpus(dir: &Path, spec: SynthSpec) -> Result<DatasetManifest, TrainError> {
    let ids = synth_class_ids(spec.classes)?;
    if spec.per_class == 0 {
        return Err(TrainError::Config("per_class must be at least 1".into()));
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| TrainError::Io { path, source }
    };
    let meta_dir = dir.join("metadata");
    std::fs::create_dir_all(&meta_dir).map_err(io(&meta_dir))?;

    let mut csv = String::from("slice_file_name,fsID,start,end,salience,fold,classID,class\n");
    for (k, &class_id) in ids.iter().enumerate() {
        let freq = synth_frequency_hz(k, spec.classes);
        let rates: Vec<u32> = RATES.iter().copied().filter(|&r| r as f64 >= 2.5 * freq).collect();
        for j in 0..spec.per_class {
            let item = (k * spec.per_class + j) as u64;
            let mut rng = stream_rng(spec.seed, Stream::Synth { item });
            let rate = rates[rng.random_range(0..rates.len())];
            let duration = rng.random_range(1.0..=4.0);
            let n = (duration * rate as f64).round() as usize;
            let n_channels = rng.random_range(1..=2);
            let channels: Vec<Vec<f64>> = (0..n_channels)
                .map(|_| {
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    let w = std::f64::consts::TAU * freq / rate as f64;
                    (0..n)
                        .map(|i| {
                            TONE_AMPLITUDE * (w * i as f64 + phase).sin()
                                + rng.random_range(-NOISE_AMPLITUDE..NOISE_AMPLITUDE)
                        })
                        .collect()
                })
                .collect();
            let clip = AudioClip::new(channels, rate).expect("non-empty clip");

            let fold = (j % 10) + 1;
            let source_id = 900_000 + item;
            let name = format!("{source_id}-{class_id}-0-{j}.wav");
            let fold_dir = dir.join("audio").join(format!("fold{fold}"));
            std::fs::create_dir_all(&fold_dir).map_err(io(&fold_dir))?;
            let path = fold_dir.join(&name);
            std::fs::write(&path, encode_wav_pcm16(&clip)).map_err(io(&path))?;
            writeln!(
                csv,
                "{name},{source_id},0.0,{:.6},1,{fold},{class_id},{}",
                n as f64 / rate as f64,
                CLASS_NAMES[class_id as usize]
            )
            .unwrap();
        }
    }
    let csv_path = meta_dir.join("UrbanSound8K.csv");
    std::fs::write(&csv_path, csv).map_err(io(&csv_path))?;
    Ok(load_manifest(dir)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_stay_below_nyquist_of_some_rate() {
        for k in 1..=10 {
            for p in 0..k {
                let f = synth_frequency_hz(p, k);
                assert!(RATES.iter().any(|&r| r as f64 >= 2.5 * f), "K={k} class {p} at {f} Hz");
            }
        }
        assert_eq!(synth_frequency_hz(6, 7), 12_800.0);
        assert_eq!(synth_frequency_hz(0, 7), 200.0);
    }

    #[test]
    fn seven_classes_are_av7() {
        assert_eq!(synth_class_ids(7).unwrap(), vec![0, 1, 2, 3, 5, 6, 8]);
        assert!(synth_class_ids(0).is_err());
        assert!(synth_class_ids(11).is_err());
    }
}
