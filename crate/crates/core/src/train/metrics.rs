use std::fmt::Write as _;
use std::path::Path;

use super::{EpochRecord, TrainError};

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let k = class_names.len();
        Self { class_names, counts: vec![vec![0; k]; k] }
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// `trace / total`; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// Diagonal over row sum; `None` for a class with no samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for n in &self.class_names {
            write!(s, ",{n}").unwrap();
        }
        s.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            s.push_str(name);
            for c in row {
                write!(s, ",{c}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Row-normalized to 4 decimals; rows without samples are written as `NA`.
    pub fn to_normalized_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for n in &self.class_names {
            write!(s, ",{n}").unwrap();
        }
        s.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            s.push_str(name);
            let n: u64 = row.iter().sum();
            for &c in row {
                if n == 0 {
                    s.push_str(",NA");
                } else {
                    write!(s, ",{:.4}", c as f64 / n as f64).unwrap();
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn per_class_csv(&self) -> String {
        let mut s = String::from("class,samples,correct,accuracy\n");
        for (i, (name, row)) in self.class_names.iter().zip(&self.counts).enumerate() {
            let n: u64 = row.iter().sum();
            let acc = if n == 0 { "NA".to_string() } else { format!("{:.4}", row[i] as f64 / n as f64) };
            writeln!(s, "{name},{n},{},{acc}", row[i]).unwrap();
        }
        s
    }

    /// Writes `confusion.csv`, `confusion_normalized.csv` and `per_class.csv` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<(), TrainError> {
        write_file(&dir.join("confusion.csv"), &self.to_csv())?;
        write_file(&dir.join("confusion_normalized.csv"), &self.to_normalized_csv())?;
        write_file(&dir.join("per_class.csv"), &self.per_class_csv())
    }
}

/// Outcome of evaluating a model on a list of entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<Option<f64>>,
    /// Predicted class index per evaluated entry, in input order.
    pub predictions: Vec<usize>,
    pub mean_loss: f64,
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), TrainError> {
    std::fs::write(path, text).map_err(|source| TrainError::Io { path: path.to_path_buf(), source })
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<(), TrainError> {
    let mut s = String::from("epoch,train_loss,train_acc,test_acc\n");
    for r in history {
        let test = r.test_acc.map(|a| a.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.train_acc, test).unwrap();
    }
    write_file(path, &s)
}

pub fn read_history_csv(path: &Path) -> Result<Vec<EpochRecord>, TrainError> {
    let err = |message: String| TrainError::Format { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| err(e.to_string()))?;
        let num = |i: usize| -> Result<f64, TrainError> {
            row.get(i).unwrap_or("").parse::<f64>().map_err(|e| err(format!("column {i}: {e}")))
        };
        out.push(EpochRecord {
            epoch: num(0)? as usize,
            train_loss: num(1)?,
            train_acc: num(2)?,
            test_acc: match row.get(3) {
                Some("") | None => None,
                Some(_) => Some(num(3)?),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn diagonal_matrix_is_perfect() {
        let mut m = ConfusionMatrix::new(names(3));
        for i in 0..3 {
            for _ in 0..=i {
                m.record(i, i);
            }
        }
        assert_eq!(m.accuracy(), 1.0);
        assert_eq!(m.row_sums(), vec![1, 2, 3]);
        assert_eq!(m.per_class_accuracy(), vec![Some(1.0); 3]);
    }

    #[test]
    fn misclassified_row_and_undefined_class() {
        let mut m = ConfusionMatrix::new(names(3));
        m.record(1, 0);
        m.record(1, 0);
        assert_eq!(m.counts[1], vec![2, 0, 0]);
        assert_eq!(m.accuracy(), 0.0);
        assert_eq!(m.per_class_accuracy(), vec![None, Some(0.0), None]);
        let norm = m.to_normalized_csv();
        assert!(norm.contains("c0,NA,NA,NA"));
        assert!(norm.contains("c1,1.0000,0.0000,0.0000"));
    }

    #[test]
    fn accuracy_is_trace_over_total() {
        let mut m = ConfusionMatrix::new(names(4));
        let mut s = 7u64;
        for _ in 0..200 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            m.record((s >> 33) as usize % 4, (s >> 40) as usize % 4);
        }
        assert_eq!(m.total(), 200);
        assert_eq!(m.accuracy(), m.trace() as f64 / 200.0);
    }

    #[test]
    fn history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let h = vec![
            EpochRecord { epoch: 1, train_loss: 1.25, train_acc: 0.5, test_acc: None },
            EpochRecord { epoch: 2, train_loss: 0.1 + 0.2, train_acc: 0.75, test_acc: Some(1.0 / 3.0) },
        ];
        write_history_csv(&path, &h).unwrap();
        assert_eq!(read_history_csv(&path).unwrap(), h);
    }
}
