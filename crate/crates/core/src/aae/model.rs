use std::path::Path;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNetwork, NetworkBundle, PriorSpec};

/// Number of classes of the class head: benign (0) and fraud (1).
pub const N_CLASSES: usize = 2;
pub const BENIGN: usize = 0;
pub const FRAUD: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AaeMode {
    /// Encoder emits a latent code and a class distribution; two discriminators.
    Semi,
    /// Encoder emits a latent code only; one discriminator.
    Unsupervised,
}

impl std::fmt::Display for AaeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AaeMode::Semi => "semi",
            AaeMode::Unsupervised => "unsupervised",
        })
    }
}

impl std::str::FromStr for AaeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi" => Ok(AaeMode::Semi),
            "unsup" | "unsupervised" => Ok(AaeMode::Unsupervised),
            other => Err(Error::Config(format!("unknown AAE mode `{other}`"))),
        }
    }
}

/// Layer widths shared by encoder, decoder and discriminators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: vec![128, 128],
            disc_hidden: vec![64, 64],
        }
    }
}

impl Architecture {
    /// Five fully connected layers per network with 1024-unit hidden layers.
    pub fn full_scale() -> Self {
        Architecture {
            hidden: vec![1024; 4],
            disc_hidden: vec![1024; 4],
        }
    }
}

/// Latent codes of a batch; `y` is present in semi mode only.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCodes {
    pub z: Array2<f64>,
    pub y: Option<Array2<f64>>,
}

impl LatentCodes {
    /// The decoder input: `z`, followed by `y` in semi mode.
    pub fn decoder_input(&self) -> Array2<f64> {
        match &self.y {
            Some(y) => concatenate![Axis(1), self.z, *y],
            None => self.z.clone(),
        }
    }
}

/// Classifier verdict for one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: usize,
    /// Probability of the fraud class.
    pub score: f64,
}

impl Verdict {
    pub fn is_fraud(&self) -> bool {
        self.label == FRAUD
    }
}

/// Turns one class-probability row into a verdict. Ties resolve to benign.
pub fn verdict_from_probabilities(y: &[f64]) -> Verdict {
    let label = if y[FRAUD] > y[BENIGN] { FRAUD } else { BENIGN };
    Verdict {
        label,
        score: y[FRAUD],
    }
}

/// Adversarial autoencoder in either mode.
#[derive(Debug, Clone, PartialEq)]
pub struct AaeModel {
    pub(crate) mode: AaeMode,
    pub(crate) input_dim: usize,
    pub(crate) latent_dim: usize,
    pub(crate) architecture: Architecture,
    /// Shared encoder body; outputs the last hidden layer.
    pub(crate) trunk: DenseNetwork,
    pub(crate) z_head: DenseNetwork,
    pub(crate) y_head: Option<DenseNetwork>,
    pub(crate) decoder: DenseNetwork,
    pub(crate) disc_z: DenseNetwork,
    pub(crate) disc_y: Option<DenseNetwork>,
    pub(crate) prior: PriorSpec,
    pub(crate) layout_fingerprint: Option<String>,
}

impl AaeModel {
    pub fn new(
        mode: AaeMode,
        input_dim: usize,
        latent_dim: usize,
        architecture: &Architecture,
        prior: PriorSpec,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || latent_dim == 0 {
            return Err(Error::Config("input and latent dimensions must be positive".into()));
        }
        if architecture.hidden.is_empty() || architecture.disc_hidden.is_empty() {
            return Err(Error::Config(
                "encoder and discriminators need at least one hidden layer".into(),
            ));
        }
        if prior.latent_dim() != latent_dim {
            return Err(Error::shape("prior latent dim", latent_dim, prior.latent_dim()));
        }
        if prior.n_classes() != N_CLASSES {
            return Err(Error::shape("prior classes", N_CLASSES, prior.n_classes()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = &architecture.hidden;
        let last_hidden = hidden[hidden.len() - 1];

        let trunk_dims: Vec<usize> = std::iter::once(input_dim).chain(hidden.iter().copied()).collect();
        let trunk = DenseNetwork::new(&trunk_dims, Activation::Relu, Activation::Relu, &mut rng)?;
        let z_head = DenseNetwork::new(
            &[last_hidden, latent_dim],
            Activation::Linear,
            Activation::Linear,
            &mut rng,
        )?;
        let y_head = match mode {
            AaeMode::Semi => Some(DenseNetwork::new(
                &[last_hidden, N_CLASSES],
                Activation::Linear,
                Activation::Softmax,
                &mut rng,
            )?),
            AaeMode::Unsupervised => None,
        };
        let code_dim = latent_dim + if mode == AaeMode::Semi { N_CLASSES } else { 0 };
        let decoder_dims: Vec<usize> = std::iter::once(code_dim)
            .chain(hidden.iter().rev().copied())
            .chain(std::iter::once(input_dim))
            .collect();
        let decoder = DenseNetwork::new(&decoder_dims, Activation::Relu, Activation::Linear, &mut rng)?;
        let disc = |input: usize, rng: &mut ChaCha8Rng| {
            let dims: Vec<usize> = std::iter::once(input)
                .chain(architecture.disc_hidden.iter().copied())
                .chain(std::iter::once(1))
                .collect();
            DenseNetwork::new(&dims, Activation::Relu, Activation::Sigmoid, rng)
        };
        let disc_z = disc(latent_dim, &mut rng)?;
        let disc_y = match mode {
            AaeMode::Semi => Some(disc(N_CLASSES, &mut rng)?),
            AaeMode::Unsupervised => None,
        };
        Ok(AaeModel {
            mode,
            input_dim,
            latent_dim,
            architecture: architecture.clone(),
            trunk,
            z_head,
            y_head,
            decoder,
            disc_z,
            disc_y,
            prior,
            layout_fingerprint: None,
        })
    }

    pub fn mode(&self) -> AaeMode {
        self.mode
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn code_dim(&self) -> usize {
        self.decoder.input_dim()
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn layout_fingerprint(&self) -> Option<&str> {
        self.layout_fingerprint.as_deref()
    }

    /// Binds the model to the feature layout it is trained on.
    pub fn set_layout_fingerprint(&mut self, fingerprint: impl Into<String>) {
        self.layout_fingerprint = Some(fingerprint.into());
    }

    /// Fails if the model was bound to a different feature layout.
    pub fn check_layout(&self, fingerprint: &str) -> Result<()> {
        match &self.layout_fingerprint {
            Some(expected) if expected != fingerprint => Err(Error::LayoutMismatch {
                expected: expected.clone(),
                actual: fingerprint.to_string(),
            }),
            _ => Ok(()),
        }
    }

    pub fn decoder(&self) -> &DenseNetwork {
        &self.decoder
    }

    pub fn disc_z(&self) -> &DenseNetwork {
        &self.disc_z
    }

    pub fn disc_y(&self) -> Option<&DenseNetwork> {
        self.disc_y.as_ref()
    }

    pub fn disc_z_mut(&mut self) -> &mut DenseNetwork {
        &mut self.disc_z
    }

    pub fn disc_y_mut(&mut self) -> Option<&mut DenseNetwork> {
        self.disc_y.as_mut()
    }

    /// Encoder networks in a fixed order: trunk, z head, y head.
    pub fn encoder_networks(&self) -> Vec<&DenseNetwork> {
        let mut v = vec![&self.trunk, &self.z_head];
        v.extend(self.y_head.as_ref());
        v
    }

    pub fn discriminator_networks(&self) -> Vec<&DenseNetwork> {
        let mut v = vec![&self.disc_z];
        v.extend(self.disc_y.as_ref());
        v
    }

    pub(crate) fn require_semi(&self, op: &'static str) -> Result<()> {
        if self.mode != AaeMode::Semi {
            return Err(Error::Mode {
                op,
                required: "semi-supervised",
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::shape(
                "encoder input",
                format!("{} columns", self.input_dim),
                format!("{} columns", x.ncols()),
            ));
        }
        Ok(())
    }

    /// Encodes a batch to latent codes (and class distributions in semi mode).
    pub fn encode(&self, x: ArrayView2<'_, f64>) -> Result<LatentCodes> {
        self.check_input(&x)?;
        let h = self.trunk.predict(x)?;
        let z = self.z_head.predict(h.view())?;
        let y = match &self.y_head {
            Some(head) => Some(head.predict(h.view())?),
            None => None,
        };
        Ok(LatentCodes { z, y })
    }

    /// Reconstructs inputs from codes.
    pub fn decode(&self, codes: &LatentCodes) -> Result<Array2<f64>> {
        let want_y = self.mode == AaeMode::Semi;
        if codes.z.ncols() != self.latent_dim || codes.y.is_some() != want_y {
            return Err(Error::shape(
                "decoder input",
                format!("z of width {} (y: {want_y})", self.latent_dim),
                format!("z of width {} (y: {})", codes.z.ncols(), codes.y.is_some()),
            ));
        }
        if let Some(y) = &codes.y {
            if y.ncols() != N_CLASSES || y.nrows() != codes.z.nrows() {
                return Err(Error::shape(
                    "decoder class input",
                    format!("({}, {N_CLASSES})", codes.z.nrows()),
                    format!("{:?}", y.dim()),
                ));
            }
        }
        self.decoder.predict(codes.decoder_input().view())
    }

    /// Class probabilities of the y head.
    pub fn class_probabilities(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.require_semi("classify")?;
        self.check_input(&x)?;
        let h = self.trunk.predict(x)?;
        self.y_head.as_ref().expect("semi mode has a y head").predict(h.view())
    }

    /// Label (argmax, ties to benign) and fraud probability per row.
    pub fn classify(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Verdict>> {
        let y = self.class_probabilities(x)?;
        Ok(y.rows()
            .into_iter()
            .map(|r| verdict_from_probabilities(r.as_slice().expect("contiguous row")))
            .collect())
    }

    /// Fraud probability per row.
    pub fn fraud_scores(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.class_probabilities(x)?.column(FRAUD).to_owned())
    }

    pub fn to_file(&self) -> AaeModelFile {
        let mut networks = NetworkBundle::new(Some(self.prior.clone()));
        let mut put = |name: &str, net: &DenseNetwork| {
            networks.networks.insert(name.to_string(), net.clone());
        };
        put("trunk", &self.trunk);
        put("z_head", &self.z_head);
        put("decoder", &self.decoder);
        put("disc_z", &self.disc_z);
        if let Some(n) = &self.y_head {
            put("y_head", n);
        }
        if let Some(n) = &self.disc_y {
            put("disc_y", n);
        }
        AaeModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            header: ModelHeader {
                mode: self.mode,
                input_dim: self.input_dim,
                latent_dim: self.latent_dim,
                architecture: self.architecture.clone(),
                layout_fingerprint: self.layout_fingerprint.clone(),
            },
            networks,
        }
    }

    pub fn from_file(file: AaeModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        file.networks.check_header()?;
        let AaeModelFile {
            header, networks, ..
        } = file;
        let prior = networks
            .prior
            .clone()
            .ok_or_else(|| Error::Input("model file has no prior".into()))?;
        let mut nets = networks.networks;
        let mut take = |name: &str| {
            nets.remove(name)
                .ok_or_else(|| Error::Input(format!("model file lacks network `{name}`")))
        };
        let trunk = take("trunk")?;
        let z_head = take("z_head")?;
        let decoder = take("decoder")?;
        let disc_z = take("disc_z")?;
        let (y_head, disc_y) = match header.mode {
            AaeMode::Semi => (Some(take("y_head")?), Some(take("disc_y")?)),
            AaeMode::Unsupervised => (None, None),
        };
        if !nets.is_empty() {
            return Err(Error::Input(format!(
                "unexpected networks in {} model: {:?}",
                header.mode,
                nets.keys().collect::<Vec<_>>()
            )));
        }
        let model = AaeModel {
            mode: header.mode,
            input_dim: header.input_dim,
            latent_dim: header.latent_dim,
            architecture: header.architecture,
            trunk,
            z_head,
            y_head,
            decoder,
            disc_z,
            disc_y,
            prior,
            layout_fingerprint: header.layout_fingerprint,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let code = self.latent_dim + if self.mode == AaeMode::Semi { N_CLASSES } else { 0 };
        let checks = [
            ("trunk input", self.input_dim, self.trunk.input_dim()),
            ("z head input", self.trunk.output_dim(), self.z_head.input_dim()),
            ("z head output", self.latent_dim, self.z_head.output_dim()),
            ("decoder input", code, self.decoder.input_dim()),
            ("decoder output", self.input_dim, self.decoder.output_dim()),
            ("disc_z input", self.latent_dim, self.disc_z.input_dim()),
            ("disc_z output", 1, self.disc_z.output_dim()),
            ("prior latent", self.latent_dim, self.prior.latent_dim()),
        ];
        for (what, expected, actual) in checks {
            if expected != actual {
                return Err(Error::shape("model structure", format!("{what} {expected}"), actual));
            }
        }
        if let (Some(y), Some(d)) = (&self.y_head, &self.disc_y) {
            if y.output_dim() != N_CLASSES || d.input_dim() != N_CLASSES || d.output_dim() != 1 {
                return Err(Error::shape("class head", N_CLASSES, y.output_dim()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_file())?;
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

pub const MODEL_FORMAT: &str = "fraudjudger.aae";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub mode: AaeMode,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub architecture: Architecture,
    pub layout_fingerprint: Option<String>,
}

/// On-disk form of an [`AaeModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaeModelFile {
    pub format: String,
    pub version: u32,
    pub header: ModelHeader,
    pub networks: NetworkBundle,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn arch() -> Architecture {
        Architecture {
            hidden: vec![6, 5],
            disc_hidden: vec![4],
        }
    }

    fn prior(latent: usize) -> PriorSpec {
        PriorSpec::standard(latent, PriorSpec::binary_class_prior(0.2)).unwrap()
    }

    #[test]
    fn shapes_per_mode() {
        let semi = AaeModel::new(AaeMode::Semi, 7, 3, &arch(), prior(3), 1).unwrap();
        assert_eq!(semi.code_dim(), 5);
        assert_eq!(semi.encoder_networks().len(), 3);
        assert_eq!(semi.discriminator_networks().len(), 2);
        let unsup = AaeModel::new(AaeMode::Unsupervised, 7, 3, &arch(), prior(3), 1).unwrap();
        assert_eq!(unsup.code_dim(), 3);
        assert_eq!(unsup.discriminator_networks().len(), 1);

        let x = Array2::from_shape_fn((4, 7), |(i, j)| (i * 7 + j) as f64 / 10.0);
        let codes = semi.encode(x.view()).unwrap();
        assert_eq!(codes.z.dim(), (4, 3));
        let y = codes.y.as_ref().unwrap();
        for row in y.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(semi.decode(&codes).unwrap().dim(), (4, 7));
        assert!(unsup.decode(&codes).is_err());
        assert!(matches!(unsup.fraud_scores(x.view()), Err(Error::Mode { .. })));
    }

    #[test]
    fn wrong_input_width_is_a_shape_error() {
        let m = AaeModel::new(AaeMode::Semi, 7, 3, &arch(), prior(3), 1).unwrap();
        let x = Array2::zeros((2, 6));
        assert!(matches!(m.encode(x.view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn prior_must_match_latent_dim() {
        assert!(AaeModel::new(AaeMode::Semi, 7, 3, &arch(), prior(2), 1).is_err());
    }

    #[test]
    fn ties_resolve_to_benign() {
        assert_eq!(verdict_from_probabilities(&[0.5, 0.5]).label, BENIGN);
        assert!(verdict_from_probabilities(&[0.4, 0.6]).is_fraud());
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for mode in [AaeMode::Semi, AaeMode::Unsupervised] {
            let mut m = AaeModel::new(mode, 7, 3, &arch(), prior(3), 11).unwrap();
            m.set_layout_fingerprint("abc");
            let path = dir.path().join(format!("{mode}.json"));
            m.save(&path).unwrap();
            let back = AaeModel::load(&path).unwrap();
            assert_eq!(back, m);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let x = Array2::from_shape_fn((5, 7), |_| rng.gen_range(-2.0..2.0));
            let (a, b) = (m.encode(x.view()).unwrap(), back.encode(x.view()).unwrap());
            assert_eq!(a, b);
            assert!(back.check_layout("abc").is_ok());
            assert!(matches!(back.check_layout("xyz"), Err(Error::LayoutMismatch { .. })));
        }
    }

    #[test]
    fn mode_parses() {
        assert_eq!("unsup".parse::<AaeMode>().unwrap(), AaeMode::Unsupervised);
        assert_eq!("semi".parse::<AaeMode>().unwrap(), AaeMode::Semi);
        assert!("x".parse::<AaeMode>().is_err());
    }
}
