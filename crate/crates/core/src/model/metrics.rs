//! Training and validation metrics.

use serde::{Deserialize, Serialize};

use super::arch::{HeadMode, NUM_CLASSES};
use crate::error::{Error, Result};

/// Distance at or below which a normalized prediction counts as correct.
pub const ACCURACY_THRESHOLD: f64 = 0.02;

/// Fraction of `(y, y')` pairs with `|y - y'| <= 0.02`.
pub fn accuracy_at_002(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Invalid("accuracy@0.02 of an empty pair list is undefined".into()));
    }
    // Absorbs binary rounding of decimal inputs such as 0.83 - 0.81.
    let hits = pairs.iter().filter(|(y, p)| (y - p).abs() <= ACCURACY_THRESHOLD + 1e-12).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Dimension {
                op: "confusion_matrix",
                axis: "sample",
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut m = ConfusionMatrix::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(Error::ClassIndex { index: t.max(p), classes: NUM_CLASSES });
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn accuracy(&self) -> f64 {
        let total: u64 = self.row_sums().iter().sum();
        let diag: u64 = (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum();
        if total == 0 {
            0.0
        } else {
            diag as f64 / total as f64
        }
    }

    /// Every diagonal entry is at least every off-diagonal entry of its row.
    pub fn diagonally_dominant(&self) -> bool {
        (0..NUM_CLASSES).all(|i| (0..NUM_CLASSES).all(|j| self.counts[i][i] >= self.counts[i][j]))
    }
}

/// One validation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    /// Mean training loss since the previous record.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Regression: accuracy@0.02 over every output cell.
    pub accuracy_at_002: Option<f64>,
    /// Regression: Spearman between true quality and per-patch mean prediction.
    pub spearman: Option<f64>,
    /// Classification: per-cell accuracy.
    pub class_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: HeadMode,
    pub records: Vec<EvalRecord>,
    pub best_step: Option<u64>,
    /// Regression, at the best step: `(y, mean y')` per validation patch.
    pub pairs: Vec<(f64, f64)>,
    /// Classification, at the best step, over validation cells.
    pub confusion: Option<ConfusionMatrix>,
}

impl MetricsReport {
    pub fn new(mode: HeadMode) -> Self {
        MetricsReport { mode, records: Vec::new(), best_step: None, pairs: Vec::new(), confusion: None }
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("step,train_loss,val_loss,accuracy_at_002,spearman,class_accuracy\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step,
                r.train_loss,
                r.val_loss,
                opt(r.accuracy_at_002),
                opt(r.spearman),
                opt(r.class_accuracy)
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_threshold_is_inclusive() {
        assert_eq!(accuracy_at_002(&[(0.80, 0.81)]).unwrap(), 1.0);
        assert_eq!(accuracy_at_002(&[(0.80, 0.82)]).unwrap(), 1.0);
        assert_eq!(accuracy_at_002(&[(0.81, 0.83)]).unwrap(), 1.0);
        assert_eq!(accuracy_at_002(&[(0.80, 0.83)]).unwrap(), 0.0);
        assert_eq!(accuracy_at_002(&[(0.5, 0.5), (0.1, 0.9)]).unwrap(), 0.5);
        assert!(accuracy_at_002(&[]).is_err());
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let truth = [0, 0, 1, 4, 4, 4];
        let pred = [0, 1, 1, 4, 3, 4];
        let m = ConfusionMatrix::from_labels(&truth, &pred).unwrap();
        assert_eq!(m.row_sums(), [2, 1, 0, 0, 3]);
        assert!(m.diagonally_dominant());
        assert!((m.accuracy() - 4.0 / 6.0).abs() < 1e-12);
        assert!(ConfusionMatrix::from_labels(&[5], &[0]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_record() {
        let mut r = MetricsReport::new(HeadMode::Regression);
        r.records.push(EvalRecord {
            step: 500,
            train_loss: 0.1,
            val_loss: 0.2,
            accuracy_at_002: Some(0.3),
            spearman: None,
            class_accuracy: None,
        });
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("500,0.1,0.2,0.3,,"));
        assert!(r.to_json().contains("\"best_step\""));
    }
}
