use ndarray::Array2;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraud share of the reference payment dataset (4,046 of 29,354 users).
pub const REFERENCE_FRAUD_RATIO: f64 = 0.1378;

/// Priors the adversarial regularizer pushes the encoder toward: a diagonal
/// Gaussian for the latent code and a categorical distribution for the class
/// head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior", into = "RawPrior")]
pub struct PriorSpec {
    z_mean: Vec<f64>,
    z_std: Vec<f64>,
    y_prior: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPrior {
    z_mean: Vec<f64>,
    z_std: Vec<f64>,
    y_prior: Vec<f64>,
}

impl TryFrom<RawPrior> for PriorSpec {
    type Error = Error;
    fn try_from(raw: RawPrior) -> Result<Self> {
        PriorSpec::new(raw.z_mean, raw.z_std, raw.y_prior)
    }
}

impl From<PriorSpec> for RawPrior {
    fn from(p: PriorSpec) -> Self {
        RawPrior {
            z_mean: p.z_mean,
            z_std: p.z_std,
            y_prior: p.y_prior,
        }
    }
}

impl PriorSpec {
    pub fn new(z_mean: Vec<f64>, z_std: Vec<f64>, y_prior: Vec<f64>) -> Result<Self> {
        if z_mean.is_empty() || z_mean.len() != z_std.len() {
            return Err(Error::Config(format!(
                "z prior needs matching non-empty mean/std, got {} and {}",
                z_mean.len(),
                z_std.len()
            )));
        }
        if z_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("z prior mean must be finite".into()));
        }
        if z_std.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("z prior std must be strictly positive".into()));
        }
        if y_prior.len() < 2 || y_prior.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::Config(format!("invalid class prior {y_prior:?}")));
        }
        let total: f64 = y_prior.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("class prior sums to {total}, not 1")));
        }
        Ok(PriorSpec {
            z_mean,
            z_std,
            y_prior,
        })
    }

    /// `N(0, I)` latent prior with the given class prior.
    pub fn standard(latent_dim: usize, y_prior: Vec<f64>) -> Result<Self> {
        Self::new(vec![0.0; latent_dim], vec![1.0; latent_dim], y_prior)
    }

    /// Binary class prior `[1 - fraud, fraud]`.
    pub fn binary_class_prior(fraud_ratio: f64) -> Vec<f64> {
        vec![1.0 - fraud_ratio, fraud_ratio]
    }

    pub fn latent_dim(&self) -> usize {
        self.z_mean.len()
    }

    pub fn n_classes(&self) -> usize {
        self.y_prior.len()
    }

    pub fn z_mean(&self) -> &[f64] {
        &self.z_mean
    }

    pub fn z_std(&self) -> &[f64] {
        &self.z_std
    }

    pub fn y_prior(&self) -> &[f64] {
        &self.y_prior
    }

    /// Draws `n` latent codes and `n` one-hot class vectors from the priors.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Array2<f64>, Array2<f64>) {
        let d = self.latent_dim();
        let mut z = Array2::zeros((n, d));
        for mut row in z.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let e: f64 = StandardNormal.sample(rng);
                *v = self.z_mean[j] + self.z_std[j] * e;
            }
        }
        // Validated in `new`: non-negative weights with unit sum.
        let classes = WeightedIndex::new(&self.y_prior).expect("validated class prior");
        let mut y = Array2::zeros((n, self.n_classes()));
        for mut row in y.rows_mut() {
            row[classes.sample(rng)] = 1.0;
        }
        (z, y)
    }
}

/// Free-function form of [`PriorSpec::sample`].
pub fn sample_prior<R: Rng + ?Sized>(
    spec: &PriorSpec,
    n: usize,
    rng: &mut R,
) -> (Array2<f64>, Array2<f64>) {
    spec.sample(n, rng)
}
