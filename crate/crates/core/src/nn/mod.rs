//! Minimal dense-network engine: exact backpropagation, Adam, loss
//! primitives and prior samplers. Everything runs in `f64`.

mod loss;
mod network;
mod optim;
mod prior;

pub use loss::{
    bce, bce_grad, bce_logit_grad, clamp_probability, mse, mse_grad, softmax_ce,
    softmax_ce_logit_grad, EPS_CLIP,
};
pub use network::{Activation, DenseLayer, DenseNetwork, Gradients, LayerGradient};
pub use optim::{Adam, AdamConfig};
pub use prior::{sample_prior, PriorSpec, REFERENCE_FRAUD_RATIO};

pub(crate) use network::sigmoid;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NETWORK_FORMAT: &str = "fraudjudger.networks";
pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// Versioned, self-describing container for a named set of networks and
/// their prior. Floats are written with shortest round-trip formatting and
/// parsed exactly, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkBundle {
    pub format: String,
    pub version: u32,
    pub prior: Option<PriorSpec>,
    pub networks: BTreeMap<String, DenseNetwork>,
}

impl NetworkBundle {
    pub fn new(prior: Option<PriorSpec>) -> Self {
        NetworkBundle {
            format: NETWORK_FORMAT.to_string(),
            version: NETWORK_FORMAT_VERSION,
            prior,
            networks: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: NetworkBundle = serde_json::from_str(text)?;
        bundle.check_header()?;
        Ok(bundle)
    }

    pub fn check_header(&self) -> Result<()> {
        if self.format != NETWORK_FORMAT {
            return Err(Error::Input(format!("unknown network format `{}`", self.format)));
        }
        if self.version != NETWORK_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported network format version {}",
                self.version
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bundle_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut bundle = NetworkBundle::new(Some(
            PriorSpec::new(vec![0.1, -0.3], vec![1.0 / 3.0, 2.0], vec![0.8622, 0.1378]).unwrap(),
        ));
        for (name, dims) in [("a", vec![5, 7, 2]), ("b", vec![2, 3, 1])] {
            let net =
                DenseNetwork::new(&dims, Activation::Relu, Activation::Sigmoid, &mut rng).unwrap();
            bundle.networks.insert(name.to_string(), net);
        }
        let text = bundle.to_json().unwrap();
        let back = NetworkBundle::from_json(&text).unwrap();
        assert_eq!(back, bundle);
        for (name, net) in &bundle.networks {
            let other = &back.networks[name];
            for (l, r) in net.layers().iter().zip(other.layers()) {
                for (a, b) in l.weights.iter().zip(r.weights.iter()) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut bundle = NetworkBundle::new(None);
        bundle.version = 99;
        let text = serde_json::to_string(&bundle).unwrap();
        assert!(NetworkBundle::from_json(&text).is_err());
    }
}
