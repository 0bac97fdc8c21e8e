use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Coefficient of `0.5 * l2 * |w|^2`.
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.5,
            iterations: 500,
            l2: 1e-3,
        }
    }
}

/// Linear scorer on internally standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Array1<f64>,
    /// 0 for columns without variance, whose weight is pinned at 0.
    pub inv_std: Array1<f64>,
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl LogisticModel {
    /// Weight of each input column in original units.
    pub fn raw_weights(&self) -> Array1<f64> {
        &self.weights * &self.inv_std
    }

    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::shape("baseline input", self.weights.len(), x.ncols()));
        }
        let z = (&x - &self.mean) * &self.inv_std;
        Ok(z.dot(&self.weights) + self.bias)
    }

    /// Fraud probability per row.
    pub fn score(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.decision(x)?.mapv(sigmoid))
    }
}

/// Full-batch gradient descent on the mean logistic loss plus an L2 penalty,
/// starting from zero weights.
pub fn train_logistic_baseline(x: ArrayView2<'_, f64>, labels: &[bool], cfg: &LogisticConfig) -> Result<LogisticModel> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::shape("baseline labels", n, labels.len()));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::Input("baseline needs both classes in its training labels".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("baseline features contain non-finite values".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x.std_axis(Axis(0), 0.0);
    let inv_std = std.mapv(|s| if s > 1e-12 { 1.0 / s } else { 0.0 });
    let z = (&x - &mean) * &inv_std;
    let y: Array1<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let mut w = Array1::zeros(x.ncols());
    let mut b = 0.0;
    for _ in 0..cfg.iterations {
        let p = (z.dot(&w) + b).mapv(sigmoid);
        let r = (&p - &y) / n as f64;
        let gw = z.t().dot(&r) + cfg.l2 * &w;
        b -= cfg.learning_rate * r.sum();
        w.scaled_add(-cfg.learning_rate, &gw);
    }
    Ok(LogisticModel {
        mean,
        inv_std,
        weights: w,
        bias: b,
    })
}

/// Mean logistic loss plus penalty, for inspection.
pub fn logistic_objective(model: &LogisticModel, x: ArrayView2<'_, f64>, labels: &[bool], l2: f64) -> Result<f64> {
    let d = model.decision(x)?;
    let loss: f64 = d
        .iter()
        .zip(labels)
        .map(|(&t, &l)| {
            let s = if l { -t } else { t };
            // ln(1 + e^s), stable for large |s|
            s.max(0.0) + (-s.abs()).exp().ln_1p()
        })
        .sum::<f64>()
        / labels.len() as f64;
    Ok(loss + 0.5 * l2 * sq_norm(model.weights.view()))
}

fn sq_norm(w: ArrayView1<'_, f64>) -> f64 {
    w.dot(&w)
}
