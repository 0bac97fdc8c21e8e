use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are called positive.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From (0, 0) to (1, 1), non-decreasing in both coordinates.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold);
        }
        out
    }
}

/// ROC curve by a descending threshold sweep, tied scores forming one step,
/// with the trapezoidal area underneath.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::shape("ROC inputs", labels.len(), scores.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Input("ROC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    // Twice the area in units of one positive-negative pair.
    let mut twice_area: u128 = 0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += ((fp - fp0) * (tp + tp0)) as u128;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    let auc = twice_area as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_and_constant_scores() {
        let labels = [true, true, false, false];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap().auc, 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &labels).unwrap().auc, 0.5);
    }

    #[test]
    fn curve_endpoints_and_monotonicity() {
        let c = roc_auc(&[0.3, 0.7, 0.7, 0.1, 0.9], &[false, true, false, true, true]).unwrap();
        let first = c.points[0];
        let last = *c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        assert_eq!(c.to_csv().lines().count(), c.points.len() + 1);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
    }
}
