use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urban-acoustics"))
        .args(args)
        .env_remove("URBAN_ACOUSTICS_DATA")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, classes: usize, per_class: usize, seed: u64) {
    let o = bin(&[
        "synth",
        "--out",
        s(dir),
        "--classes",
        &classes.to_string(),
        "--per-class",
        &per_class.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

fn wavs(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(wavs(&p));
        } else if p.extension().is_some_and(|x| x == "wav") {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn train_tiny(data: &Path, out: &Path, epochs: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", "--data", s(data), "--out", s(out), "--classes", "0,1", "--epochs", epochs, "--arch", "scaled:16",
        "--split-ratio", "0.5",
    ];
    args.extend_from_slice(extra);
    bin(&args)
}

#[test]
fn synth_writes_a_deterministic_corpus() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(&a.path().join("c"), 7, 10, 5);
    synth(&b.path().join("c"), 7, 10, 5);
    let wa = wavs(&a.path().join("c"));
    assert_eq!(wa.len(), 70);
    assert!(a.path().join("c/metadata/UrbanSound8K.csv").is_file());
    assert!(a.path().join("c/run_config.toml").is_file());
    for (x, y) in wa.iter().zip(wavs(&b.path().join("c"))) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    // refuses to write into a populated directory
    let o = bin(&["synth", "--out", s(&a.path().join("c"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn prepare_reports_counts_and_fills_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 10, 1, 0);
    let o = bin(&["prepare", "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("10 clips in 10 classes"), "{text}");
    assert!(text.contains("street_music"));

    let cache = dir.path().join("cache");
    let o = bin(&["prepare", "--data", s(&data), "--classes", "av7", "--cache", s(&cache)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("7 clips in 7 classes"), "{text}");
    assert!(!text.contains("street_music"));
    assert!(cache.join("run_config.toml").is_file());
    let cached = walk_count(&cache);
    assert!(cached >= 8, "expected 7 cached tensors plus the config, found {cached}");
}

fn walk_count(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk_count(&p)
            } else {
                1
            }
        })
        .sum()
}

#[test]
fn prepare_flags_missing_metadata_and_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["prepare", "--data", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("UrbanSound8K.csv"), "{err}");
    assert!(err.contains(&dir.path().join("metadata").display().to_string()), "{err}");

    let data = dir.path().join("data");
    synth(&data, 2, 2, 0);
    let victim = wavs(&data).remove(0);
    std::fs::write(&victim, b"not a wav").unwrap();
    let o = bin(&["prepare", "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&victim.display().to_string()));
}

#[test]
fn train_writes_artifacts_and_double_precision_reruns_match() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 2, 4, 1);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = train_tiny(&data, &a, "2", &["--precision", "f64"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("epoch   2/2"), "{}", stdout(&o));
    for f in ["run_config.toml", "history.csv", "model.usnd", "confusion.csv", "confusion_normalized.csv", "per_class.csv"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    let o = train_tiny(&data, &b, "2", &["--precision", "f64"]);
    assert_eq!(o.status.code(), Some(0));
    let history = |d: &Path| std::fs::read_to_string(d.join("history.csv")).unwrap();
    assert_eq!(history(&a), history(&b));
    assert_eq!(history(&a).lines().count(), 3);

    // the saved config alone reproduces the run
    let c = dir.path().join("c");
    let o = bin(&["train", "--config", s(&a.join("run_config.toml")), "--out", s(&c)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(history(&a), history(&c));
}

#[test]
fn train_rejects_bad_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["train", "--data", s(dir.path()), "--out", s(&dir.path().join("o")), "--classes", "av9"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["train", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("URBAN_ACOUSTICS_DATA"));
}

#[test]
fn eval_and_predict_use_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 2, 4, 2);
    let run = dir.path().join("run");
    assert_eq!(train_tiny(&data, &run, "1", &[]).status.code(), Some(0));
    let ckpt = run.join("model.usnd");

    let o = bin(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("accuracy"));
    let csv_text = std::fs::read_to_string(run.join("eval/confusion.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv_text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.len() == 3));
    // the recomputed test split has 2 of the 4 clips per class
    let total: u64 = rows[1..].iter().flat_map(|r| r[1..].iter().map(|v| v.parse::<u64>().unwrap())).sum();
    assert_eq!(total, 4);
    assert!(run.join("eval/run_config.toml").is_file());

    let out = dir.path().join("all");
    let o = bin(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--all", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("of 8)"), "{}", stdout(&o));

    let o = bin(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--classes", "all10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("class subset mismatch"), "{}", stderr(&o));

    let silent = dir.path().join("silent.wav");
    std::fs::write(&silent, silent_wav()).unwrap();
    let missing = dir.path().join("missing.wav");
    let o = bin(&["predict", "--checkpoint", s(&ckpt), s(&silent), s(&missing), s(&wavs(&data)[0])]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.wav"));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2, "{lines:?}");
    for line in &lines {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3);
        assert!(["air_conditioner", "car_horn"].contains(&fields[1]));
        let sum: f64 = fields[2].split(' ').map(|kv| kv.split_once('=').unwrap().1.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() <= 1e-3, "{line}");
    }
}

/// One second of 16-bit mono silence at 16 kHz.
fn silent_wav() -> Vec<u8> {
    let n: u32 = 16_000;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + 2 * n).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&16_000u32.to_le_bytes());
    b.extend_from_slice(&32_000u32.to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&(2 * n).to_le_bytes());
    b.resize(b.len() + 2 * n as usize, 0);
    b
}
