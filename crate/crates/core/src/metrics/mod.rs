//! Classification metrics, ROC analysis and a logistic-regression baseline.

mod baseline;
mod classification;
mod roc;

pub use baseline::{logistic_objective, train_logistic_baseline, LogisticConfig, LogisticModel};
pub use classification::{confusion, prf_metrics, ConfusionCounts, PrfMetrics};
pub use roc::{roc_auc, RocCurve, RocPoint};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Everything reported for one scored evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub confusion: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "n,tp,fp,tn,fn,accuracy,precision,recall,f1,auc";

    pub fn csv_row(&self) -> String {
        let c = &self.confusion;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n, c.tp, c.fp, c.tn, c.fn_, self.accuracy, self.precision, self.recall, self.f1, self.auc
        )
    }
}

/// Metrics for fraud scores in `[0, 1]`; a score above 0.5 counts as a
/// fraud prediction.
pub fn evaluate_scores(scores: &[f64], labels: &[bool]) -> Result<(EvalReport, RocCurve)> {
    let preds: Vec<bool> = scores.iter().map(|&s| s > 0.5).collect();
    evaluate(&preds, scores, labels)
}

pub fn evaluate(preds: &[bool], scores: &[f64], labels: &[bool]) -> Result<(EvalReport, RocCurve)> {
    let confusion = confusion(preds, labels)?;
    let m = prf_metrics(&confusion)?;
    let roc = roc_auc(scores, labels)?;
    Ok((
        EvalReport {
            n: labels.len(),
            confusion,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            auc: roc.auc,
        },
        roc,
    ))
}
