//! Loss primitives for reconstruction, adversarial and classification training.
//!
//! Every probability is floored at [`EPS_CLIP`] before a logarithm, so
//! losses stay finite. The `*_logit_grad` helpers return gradients with
//! respect to the pre-activation of the sigmoid/softmax output layer; those
//! are what the trainers feed into
//! [`DenseNetwork::backward_from_preactivation`](super::DenseNetwork::backward_from_preactivation).

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Floor applied to probabilities before any logarithm.
pub const EPS_CLIP: f64 = 1e-7;

#[inline]
pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(EPS_CLIP, 1.0 - EPS_CLIP)
}

/// `ln` of a probability floored at [`EPS_CLIP`].
#[inline]
fn ln_prob(p: f64) -> f64 {
    p.max(EPS_CLIP).ln()
}

fn same_shape(context: &'static str, a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            context,
            format!("{:?}", a.dim()),
            format!("{:?}", b.dim()),
        ));
    }
    if a.is_empty() {
        return Err(Error::Input(format!("{context}: empty batch")));
    }
    Ok(())
}

/// Mean over every entry of `(x - x_rec)^2`.
pub fn mse(x: ArrayView2<'_, f64>, x_rec: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape("mse", &x, &x_rec)?;
    let sum = Zip::from(&x)
        .and(&x_rec)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
    Ok(sum / x.len() as f64)
}

/// Gradient of [`mse`] with respect to `x_rec`.
pub fn mse_grad(x: ArrayView2<'_, f64>, x_rec: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    same_shape("mse", &x, &x_rec)?;
    let scale = 2.0 / x.len() as f64;
    Ok(Zip::from(&x).and(&x_rec).map_collect(|&a, &b| scale * (b - a)))
}

fn check_targets(p: &ArrayView1<'_, f64>, targets: &ArrayView1<'_, f64>) -> Result<()> {
    if p.len() != targets.len() {
        return Err(Error::shape("bce targets", p.len(), targets.len()));
    }
    if p.is_empty() {
        return Err(Error::Input("bce: empty batch".into()));
    }
    if targets.iter().any(|&a| a != 0.0 && a != 1.0) {
        return Err(Error::Input("bce targets must be 0 or 1".into()));
    }
    Ok(())
}

/// Binary cross-entropy `-(a log p + (1 - a) log(1 - p))`, averaged over the batch.
pub fn bce(p: ArrayView1<'_, f64>, targets: ArrayView1<'_, f64>) -> Result<f64> {
    check_targets(&p, &targets)?;
    let sum = Zip::from(&p).and(&targets).fold(0.0, |acc, &p, &a| {
        let pos = if a != 0.0 { a * ln_prob(p) } else { 0.0 };
        let neg = if a != 1.0 { (1.0 - a) * ln_prob(1.0 - p) } else { 0.0 };
        acc - (pos + neg)
    });
    Ok(sum / p.len() as f64)
}

/// Gradient of [`bce`] with respect to `p` (clamped probabilities are
/// treated as pass-through).
pub fn bce_grad(p: ArrayView1<'_, f64>, targets: ArrayView1<'_, f64>) -> Result<ndarray::Array1<f64>> {
    check_targets(&p, &targets)?;
    let n = p.len() as f64;
    Ok(Zip::from(&p).and(&targets).map_collect(|&p, &a| {
        let p = clamp_probability(p);
        (-a / p + (1.0 - a) / (1.0 - p)) / n
    }))
}

/// Gradient of [`bce`] with respect to the sigmoid logit, `(p - a) / n`.
pub fn bce_logit_grad(p: ArrayView1<'_, f64>, targets: ArrayView1<'_, f64>) -> Result<ndarray::Array1<f64>> {
    check_targets(&p, &targets)?;
    let n = p.len() as f64;
    Ok(Zip::from(&p).and(&targets).map_collect(|&p, &a| (p - a) / n))
}

fn check_distributions(y: &ArrayView2<'_, f64>, onehot: &ArrayView2<'_, f64>) -> Result<()> {
    same_shape("softmax cross-entropy", y, onehot)?;
    for (i, row) in y.rows().into_iter().enumerate() {
        let s = row.sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!(
                "softmax cross-entropy: row {i} of y sums to {s}"
            )));
        }
    }
    Ok(())
}

/// Categorical cross-entropy `-sum a log y`, averaged over rows.
pub fn softmax_ce(y: ArrayView2<'_, f64>, onehot: ArrayView2<'_, f64>) -> Result<f64> {
    check_distributions(&y, &onehot)?;
    let sum = Zip::from(&y)
        .and(&onehot)
        .fold(0.0, |acc, &y, &a| if a != 0.0 { acc - a * ln_prob(y) } else { acc });
    Ok(sum / y.nrows() as f64)
}

/// Gradient of [`softmax_ce`] with respect to the softmax logits, `(y - a) / n`.
pub fn softmax_ce_logit_grad(y: ArrayView2<'_, f64>, onehot: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_distributions(&y, &onehot)?;
    let n = y.nrows() as f64;
    Ok(Zip::from(&y).and(&onehot).map_collect(|&y, &a| (y - a) / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn mse_closed_forms() {
        let x = array![[0.0, 0.0]];
        assert_eq!(mse(x.view(), x.view()).unwrap(), 0.0);
        assert_eq!(mse(x.view(), array![[2.0, 2.0]].view()).unwrap(), 4.0);
        assert!(mse(x.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let x = array![[0.3, -1.2, 2.0], [0.7, 0.1, -0.4]];
        let rec = array![[0.1, -1.0, 2.5], [0.0, 0.4, -0.2]];
        let grad = mse_grad(x.view(), rec.view()).unwrap();
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut up = rec.clone();
                up[[i, j]] += eps;
                let mut down = rec.clone();
                down[[i, j]] -= eps;
                let fd = (mse(x.view(), up.view()).unwrap() - mse(x.view(), down.view()).unwrap())
                    / (2.0 * eps);
                let rel = (fd - grad[[i, j]]).abs() / grad[[i, j]].abs().max(1e-12);
                assert!(rel < 1e-6, "rel err {rel}");
            }
        }
    }

    #[test]
    fn bce_closed_forms() {
        let half = bce(array![0.5].view(), array![1.0].view()).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-12);
        let near_one = bce(array![1.0 - 1e-12].view(), array![1.0].view()).unwrap();
        assert!(near_one < 1e-6);
        let exact_zero = bce(array![0.0].view(), array![1.0].view()).unwrap();
        assert!(exact_zero.is_finite());
    }

    #[test]
    fn bce_batch_matches_elementwise_sum() {
        let p = array![0.1, 0.8, 0.35, 0.999, 0.5, 0.02];
        let a = array![0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let mut sum = 0.0;
        for i in 0..p.len() {
            sum += if a[i] == 1.0 { -(p[i] as f64).ln() } else { -(1.0 - p[i] as f64).ln() };
        }
        let got = bce(p.view(), a.view()).unwrap();
        assert!((got - sum / 6.0).abs() < 1e-12);
    }

    #[test]
    fn bce_rejects_non_binary_targets() {
        assert!(bce(array![0.5].view(), array![0.3].view()).is_err());
    }

    #[test]
    fn bce_logit_gradient_is_chain_rule_of_probability_gradient() {
        let p = array![0.2, 0.7, 0.55];
        let a = array![1.0, 0.0, 1.0];
        let gp = bce_grad(p.view(), a.view()).unwrap();
        let gl = bce_logit_grad(p.view(), a.view()).unwrap();
        let chained: Array1<f64> = Zip::from(&gp).and(&p).map_collect(|&g, &p| g * p * (1.0 - p));
        for (x, y) in chained.iter().zip(gl.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ce_closed_forms() {
        let onehot = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(softmax_ce(onehot.view(), onehot.view()).unwrap() < 1e-9);
        let uniform = array![[0.5, 0.5], [0.5, 0.5]];
        let v = softmax_ce(uniform.view(), onehot.view()).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(softmax_ce(array![[0.5, 0.6]].view(), array![[1.0, 0.0]].view()).is_err());
    }
}
