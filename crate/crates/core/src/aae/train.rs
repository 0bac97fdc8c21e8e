//! Training procedure: per batch a reconstruction step, a discriminator step,
//! a generator step and (semi mode) a classification step on labeled rows.
//!
//! Discriminator targets use `1` for codes produced by the encoder and `0`
//! for samples from the prior. The generator minimizes
//! `-E[log(1 - D(code))]`, i.e. the cross-entropy toward the prior label.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{AaeMode, AaeModel, Architecture, FRAUD, N_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{
    bce, bce_logit_grad, mse, mse_grad, softmax_ce, softmax_ce_logit_grad, Adam, AdamConfig,
    DenseNetwork, PriorSpec, REFERENCE_FRAUD_RATIO,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub architecture: Architecture,
    pub optimizer: AdamConfig,
    /// Per-phase loss weights. Each phase keeps its own Adam state, which
    /// is invariant to gradient scale, so a weight acts as a multiplier on
    /// that phase's learning rate.
    pub lambda_rec: f64,
    pub lambda_adv: f64,
    pub lambda_cls: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 100,
            latent_dim: 32,
            architecture: Architecture::default(),
            optimizer: AdamConfig::default(),
            lambda_rec: 0.3,
            lambda_adv: 1.0,
            lambda_cls: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// 100-dimensional latent space, five-layer 1024-wide networks, 500
    /// epochs, batches of 200.
    pub fn full_scale() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 200,
            latent_dim: 100,
            architecture: Architecture::full_scale(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        for (name, w) in [
            ("lambda_rec", self.lambda_rec),
            ("lambda_adv", self.lambda_adv),
            ("lambda_cls", self.lambda_cls),
        ] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {w}")));
            }
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Losses of one adversarial step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdversarialLosses {
    pub disc_z: f64,
    /// Zero in unsupervised mode.
    pub disc_y: f64,
    pub gen_z: f64,
    pub gen_y: f64,
}

impl AdversarialLosses {
    /// `L_D = L_D1 + L_D2`.
    pub fn discriminator(&self) -> f64 {
        self.disc_z + self.disc_y
    }

    pub fn generator(&self) -> f64 {
        self.gen_z + self.gen_y
    }
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub reconstruction: f64,
    pub discriminator: f64,
    pub generator: f64,
    /// `None` in unsupervised mode.
    pub classification: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochLosses>,
}

impl LossHistory {
    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,reconstruction,discriminator,generator,classification\n");
        for e in &self.epochs {
            let cls = e.classification.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.reconstruction, e.discriminator, e.generator, cls
            ));
        }
        out
    }
}

/// Class prior from the labeled subset, falling back to the reference fraud
/// ratio when nothing is labeled.
pub fn class_prior_from_labels(labels: &[Option<usize>]) -> Vec<f64> {
    let labeled: Vec<usize> = labels.iter().flatten().copied().collect();
    if labeled.is_empty() {
        return PriorSpec::binary_class_prior(REFERENCE_FRAUD_RATIO);
    }
    let fraud = labeled.iter().filter(|&&l| l == FRAUD).count() as f64 / labeled.len() as f64;
    PriorSpec::binary_class_prior(fraud)
}

struct Optimizers {
    rec_trunk: Adam,
    rec_z: Adam,
    rec_y: Option<Adam>,
    rec_decoder: Adam,
    gen_trunk: Adam,
    gen_z: Adam,
    gen_y: Option<Adam>,
    disc_z: Adam,
    disc_y: Option<Adam>,
    cls_trunk: Adam,
    cls_y: Option<Adam>,
}

impl Optimizers {
    fn new(m: &AaeModel, cfg: AdamConfig) -> Self {
        let opt = |n: &DenseNetwork| Adam::new(n, cfg);
        Optimizers {
            rec_trunk: opt(&m.trunk),
            rec_z: opt(&m.z_head),
            rec_y: m.y_head.as_ref().map(opt),
            rec_decoder: opt(&m.decoder),
            gen_trunk: opt(&m.trunk),
            gen_z: opt(&m.z_head),
            gen_y: m.y_head.as_ref().map(opt),
            disc_z: opt(&m.disc_z),
            disc_y: m.disc_y.as_ref().map(opt),
            cls_trunk: opt(&m.trunk),
            cls_y: m.y_head.as_ref().map(opt),
        }
    }
}

/// Owns a model under training together with its optimizer states and RNG.
pub struct AaeTrainer {
    model: AaeModel,
    cfg: TrainConfig,
    opt: Optimizers,
    rng: ChaCha8Rng,
    epoch: usize,
    batch: usize,
}

impl AaeTrainer {
    pub fn new(model: AaeModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let opt = Optimizers::new(&model, cfg.optimizer);
        // Independent of the init stream, which is seeded from the same value.
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a4e0_0000_0001);
        Ok(AaeTrainer {
            model,
            cfg,
            opt,
            rng,
            epoch: 0,
            batch: 0,
        })
    }

    pub fn model(&self) -> &AaeModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut AaeModel {
        &mut self.model
    }

    pub fn into_model(self) -> AaeModel {
        self.model
    }

    fn check_finite(&self, loss: &'static str, value: f64) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite {
                loss,
                epoch: self.epoch,
                batch: self.batch,
                value,
            })
        }
    }

    /// Forward through trunk and heads with caches populated.
    fn encoder_forward(&mut self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        let m = &mut self.model;
        let h = m.trunk.forward(x)?;
        let z = m.z_head.forward(h.view())?;
        let y = match &mut m.y_head {
            Some(head) => Some(head.forward(h.view())?),
            None => None,
        };
        Ok((z, y))
    }

    /// One encoder/decoder update minimizing `mean((x - x')^2)`. Returns the loss.
    pub fn train_step_reconstruction(&mut self, x: ArrayView2<'_, f64>) -> Result<f64> {
        let (z, y) = self.encoder_forward(x)?;
        let code = match &y {
            Some(y) => concatenate![Axis(1), z, *y],
            None => z,
        };
        let x_rec = self.model.decoder.forward(code.view())?;
        let loss = self.check_finite("reconstruction", mse(x, x_rec.view())?)?;
        let upstream = mse_grad(x, x_rec.view())?;
        let rate = self.cfg.lambda_rec;

        let m = &mut self.model;
        let dec_grads = m.decoder.backward(upstream.view())?;
        let latent = m.latent_dim;
        let gz = dec_grads.input.slice(s![.., ..latent]);
        let z_grads = m.z_head.backward(gz)?;
        let mut gh = z_grads.input.clone();
        let y_grads = match &m.y_head {
            Some(head) => {
                let gy = dec_grads.input.slice(s![.., latent..]);
                let g = head.backward(gy)?;
                gh += &g.input;
                Some(g)
            }
            None => None,
        };
        let trunk_grads = m.trunk.backward(gh.view())?;

        self.opt.rec_decoder.step_scaled(&mut m.decoder, &dec_grads, rate)?;
        self.opt.rec_z.step_scaled(&mut m.z_head, &z_grads, rate)?;
        if let (Some(head), Some(g), Some(o)) = (&mut m.y_head, &y_grads, &mut self.opt.rec_y) {
            o.step_scaled(head, g, rate)?;
        }
        self.opt.rec_trunk.step_scaled(&mut m.trunk, &trunk_grads, rate)?;
        Ok(loss)
    }

    /// Discriminator update followed by a generator (encoder) update.
    pub fn train_step_adversarial(&mut self, x: ArrayView2<'_, f64>) -> Result<AdversarialLosses> {
        let mut losses = AdversarialLosses::default();
        let n = x.nrows();

        // (a) discriminators; encoder untouched.
        let codes = self.model.encode(x)?;
        let (z_prior, y_prior) = self.model.prior.sample(n, &mut self.rng);
        let targets: Array1<f64> = (0..2 * n).map(|i| if i < n { 0.0 } else { 1.0 }).collect();
        losses.disc_z = discriminator_update(
            &mut self.model.disc_z,
            &mut self.opt.disc_z,
            concatenate![Axis(0), z_prior, codes.z].view(),
            &targets,
        )?;
        self.check_finite("discriminator", losses.disc_z)?;
        if let (Some(disc), Some(opt), Some(y)) =
            (&mut self.model.disc_y, &mut self.opt.disc_y, &codes.y)
        {
            losses.disc_y =
                discriminator_update(disc, opt, concatenate![Axis(0), y_prior, *y].view(), &targets)?;
            self.check_finite("discriminator", losses.disc_y)?;
        }

        // (b) generator; discriminators untouched.
        let (z, y) = self.encoder_forward(x)?;
        let prior_label = Array1::zeros(n);
        let rate = self.cfg.lambda_adv;
        let (gen_z, gz) = generator_gradient(&mut self.model.disc_z, z.view(), &prior_label)?;
        losses.gen_z = self.check_finite("generator", gen_z)?;
        let m = &mut self.model;
        let z_grads = m.z_head.backward(gz.view())?;
        let mut gh = z_grads.input.clone();
        let mut y_grads = None;
        if let (Some(disc), Some(head), Some(y)) = (&mut m.disc_y, &m.y_head, &y) {
            let (gen_y, gy) = generator_gradient(disc, y.view(), &prior_label)?;
            if !gen_y.is_finite() {
                return Err(Error::NonFinite {
                    loss: "generator",
                    epoch: self.epoch,
                    batch: self.batch,
                    value: gen_y,
                });
            }
            losses.gen_y = gen_y;
            let g = head.backward(gy.view())?;
            gh += &g.input;
            y_grads = Some(g);
        }
        let trunk_grads = m.trunk.backward(gh.view())?;
        self.opt.gen_z.step_scaled(&mut m.z_head, &z_grads, rate)?;
        if let (Some(head), Some(g), Some(o)) = (&mut m.y_head, &y_grads, &mut self.opt.gen_y) {
            o.step_scaled(head, g, rate)?;
        }
        self.opt.gen_trunk.step_scaled(&mut m.trunk, &trunk_grads, rate)?;
        Ok(losses)
    }

    /// One encoder update minimizing the cross-entropy between the class head
    /// and the true labels (`0` benign, `1` fraud).
    pub fn train_step_classification(&mut self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
        self.model.require_semi("train_step_classification")?;
        if labels.len() != x.nrows() {
            return Err(Error::shape("classification labels", x.nrows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= N_CLASSES) {
            return Err(Error::Input(format!("label {bad} is not 0 or 1")));
        }
        let mut onehot = Array2::zeros((labels.len(), N_CLASSES));
        for (i, &l) in labels.iter().enumerate() {
            onehot[[i, l]] = 1.0;
        }
        let m = &mut self.model;
        let h = m.trunk.forward(x)?;
        let head = m.y_head.as_mut().expect("semi mode has a y head");
        let y = head.forward(h.view())?;
        let loss = softmax_ce(y.view(), onehot.view())?;
        let delta = softmax_ce_logit_grad(y.view(), onehot.view())?;
        let rate = self.cfg.lambda_cls;
        let y_grads = head.backward_from_preactivation(delta.view())?;
        let trunk_grads = m.trunk.backward(y_grads.input.view())?;
        self.opt
            .cls_y
            .as_mut()
            .expect("semi mode has a class optimizer")
            .step_scaled(head, &y_grads, rate)?;
        self.opt.cls_trunk.step_scaled(&mut m.trunk, &trunk_grads, rate)?;
        self.check_finite("classification", loss)
    }
}

/// Updates `disc` on stacked prior/encoder samples and returns its BCE.
fn discriminator_update(
    disc: &mut DenseNetwork,
    opt: &mut Adam,
    inputs: ArrayView2<'_, f64>,
    targets: &Array1<f64>,
) -> Result<f64> {
    let p = disc.forward(inputs)?;
    let p = p.column(0);
    let loss = bce(p, targets.view())?;
    let delta = bce_logit_grad(p, targets.view())?.insert_axis(Axis(1));
    let grads = disc.backward_from_preactivation(delta.view())?;
    opt.step(disc, &grads)?;
    Ok(loss)
}

/// Generator loss on `codes` against the prior label and its gradient with
/// respect to `codes`. `disc` is only read (its cache is refreshed).
fn generator_gradient(
    disc: &mut DenseNetwork,
    codes: ArrayView2<'_, f64>,
    prior_label: &Array1<f64>,
) -> Result<(f64, Array2<f64>)> {
    let p = disc.forward(codes)?;
    let p = p.column(0);
    let loss = bce(p, prior_label.view())?;
    let delta = bce_logit_grad(p, prior_label.view())?.insert_axis(Axis(1));
    let grads = disc.backward_from_preactivation(delta.view())?;
    Ok((loss, grads.input))
}

/// Trains `model` on `data`. `labels[i]` is the label of row `i` when known;
/// only semi mode uses labels. Deterministic given `cfg.seed`.
pub fn train(
    model: AaeModel,
    data: ArrayView2<'_, f64>,
    labels: &[Option<usize>],
    cfg: &TrainConfig,
) -> Result<(AaeModel, LossHistory)> {
    cfg.validate()?;
    if data.ncols() != model.input_dim() {
        return Err(Error::shape("training data", model.input_dim(), data.ncols()));
    }
    if labels.len() != data.nrows() {
        return Err(Error::shape("training labels", data.nrows(), labels.len()));
    }
    let semi = model.mode() == AaeMode::Semi;
    let labeled: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|_| i))
        .collect();
    if semi {
        for class in 0..N_CLASSES {
            if !labels.iter().any(|&l| l == Some(class)) {
                return Err(Error::Input(format!(
                    "semi-supervised training needs at least one labeled sample of class {class}"
                )));
            }
        }
        if let Some(bad) = labels.iter().flatten().find(|&&l| l >= N_CLASSES) {
            return Err(Error::Input(format!("label {bad} is not 0 or 1")));
        }
    }

    let n = data.nrows();
    let mut history = LossHistory::default();
    let mut trainer = AaeTrainer::new(model, cfg.clone())?;
    if cfg.epochs == 0 || n == 0 {
        return Ok((trainer.into_model(), history));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut labeled_order = labeled.clone();
    let mut cursor = labeled_order.len();
    let cls_batch = cfg.batch_size.min(labeled.len().max(1));

    for epoch in 0..cfg.epochs {
        trainer.epoch = epoch;
        order.shuffle(&mut trainer.rng);
        let (mut rec, mut d, mut g, mut c) = (0.0, 0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            trainer.batch = b;
            let x = data.select(Axis(0), chunk);
            rec += trainer.train_step_reconstruction(x.view())?;
            let adv = trainer.train_step_adversarial(x.view())?;
            d += adv.discriminator();
            g += adv.generator();
            if semi {
                let mut rows = Vec::with_capacity(cls_batch);
                while rows.len() < cls_batch {
                    if cursor == labeled_order.len() {
                        labeled_order.shuffle(&mut trainer.rng);
                        cursor = 0;
                    }
                    rows.push(labeled_order[cursor]);
                    cursor += 1;
                }
                let xl = data.select(Axis(0), &rows);
                let yl: Vec<usize> = rows.iter().map(|&i| labels[i].expect("labeled row")).collect();
                c += trainer.train_step_classification(xl.view(), &yl)?;
            }
            batches += 1;
        }
        let k = batches.max(1) as f64;
        history.epochs.push(EpochLosses {
            epoch,
            reconstruction: rec / k,
            discriminator: d / k,
            generator: g / k,
            classification: semi.then_some(c / k),
        });
    }
    Ok((trainer.into_model(), history))
}
