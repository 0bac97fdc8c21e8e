use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with fraud (`true`) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(preds: &[bool], labels: &[bool]) -> Result<ConfusionCounts> {
    if preds.len() != labels.len() {
        return Err(Error::shape("confusion inputs", labels.len(), preds.len()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Harmonic mean `2PR / (P + R)`.
    pub f1: f64,
}

/// Accuracy, precision, recall and F1. A metric whose denominator is zero
/// is reported as 0 and logged.
pub fn prf_metrics(c: &ConfusionCounts) -> Result<PrfMetrics> {
    let n = c.total();
    if n == 0 {
        return Err(Error::Input("metrics of an empty sample".into()));
    }
    let ratio = |num: usize, den: usize, name: &str| {
        if den == 0 {
            log::warn!("{name} undefined (zero denominator); reporting 0");
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp, "precision");
    let recall = ratio(c.tp, c.tp + c.fn_, "recall");
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(PrfMetrics {
        accuracy: (c.tp + c.tn) as f64 / n as f64,
        precision,
        recall,
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let labels: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let c = confusion(&labels, &labels).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 5, fp: 0, tn: 5, fn_: 0 });
    }

    #[test]
    fn all_benign_predictions() {
        let c = confusion(&[false; 3], &[true; 3]).unwrap();
        assert_eq!(c.fn_, 3);
        let m = prf_metrics(&c).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_is_the_harmonic_mean() {
        let m = prf_metrics(&ConfusionCounts { tp: 4, fp: 1, tn: 0, fn_: 1 }).unwrap();
        assert_eq!((m.precision, m.recall), (0.8, 0.8));
        assert!((m.f1 - 0.8).abs() < 1e-15);
        let m = prf_metrics(&ConfusionCounts { tp: 1, fp: 0, tn: 5, fn_: 1 }).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 0.5));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_error_cases() {
        let m = prf_metrics(&ConfusionCounts { tp: 0, fp: 0, tn: 4, fn_: 0 }).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.0, 0.0, 0.0, 1.0));
        assert!(prf_metrics(&ConfusionCounts::default()).is_err());
        assert!(confusion(&[true], &[]).is_err());
    }

    #[test]
    fn serializes_fn_field() {
        let s = serde_json::to_string(&ConfusionCounts { tp: 1, fp: 2, tn: 3, fn_: 4 }).unwrap();
        assert_eq!(s, r#"{"tp":1,"fp":2,"tn":3,"fn":4}"#);
    }
}
