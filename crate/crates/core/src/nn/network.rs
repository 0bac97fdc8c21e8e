use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Linear => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
            }
        }
    }

    /// Maps a gradient with respect to this activation's output onto its
    /// pre-activation, given the cached output `a`.
    fn backprop(self, a: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Linear => grad.clone(),
            Activation::Relu => {
                Zip::from(a)
                    .and(grad)
                    .map_collect(|&a, &g| if a > 0.0 { g } else { 0.0 })
            }
            Activation::Sigmoid => Zip::from(a).and(grad).map_collect(|&a, &g| g * a * (1.0 - a)),
            Activation::Softmax => {
                let mut out = Array2::zeros(a.raw_dim());
                for ((a_row, g_row), mut o_row) in a.rows().into_iter().zip(grad.rows()).zip(out.rows_mut()) {
                    let dot = a_row.dot(&g_row);
                    Zip::from(&mut o_row)
                        .and(&a_row)
                        .and(&g_row)
                        .for_each(|o, &a, &g| *o = a * (g - dot));
                }
                out
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// One fully connected layer. `weights` is `(input_dim, output_dim)` so a
/// batch with one sample per row maps as `x · W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((input_dim, output_dim), || {
            rng.gen_range(-limit..=limit)
        });
        DenseLayer {
            weights,
            bias: Array1::zeros(output_dim),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// `activations[0]` is the batch, `activations[i + 1]` the output of layer `i`.
    activations: Vec<Array2<f64>>,
}

/// A feed-forward stack of dense layers.
///
/// [`DenseNetwork::forward`] records the activations of the last batch so a
/// following [`DenseNetwork::backward`] can compute exact gradients.
/// [`DenseNetwork::predict`] is the side-effect free inference path.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SerializedNetwork", into = "SerializedNetwork")]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
    cache: Option<ForwardCache>,
}

#[derive(Serialize, Deserialize)]
struct SerializedNetwork {
    layers: Vec<DenseLayer>,
}

impl TryFrom<SerializedNetwork> for DenseNetwork {
    type Error = Error;

    fn try_from(value: SerializedNetwork) -> Result<Self> {
        DenseNetwork::from_layers(value.layers)
    }
}

impl From<DenseNetwork> for SerializedNetwork {
    fn from(value: DenseNetwork) -> Self {
        SerializedNetwork {
            layers: value.layers,
        }
    }
}

impl PartialEq for DenseNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Gradient of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Parameter gradients of a whole network plus the gradient with respect to
/// its input batch, used to chain networks together.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.weights *= factor;
            layer.bias *= factor;
        }
        self.input *= factor;
    }

    /// Largest absolute parameter-gradient entry.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl DenseNetwork {
    /// Builds a network with layer widths `dims` (input first). Every layer
    /// but the last uses `hidden`; the last uses `output`.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least an input and an output width, got {dims:?}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("zero-width layer in {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { hidden };
                DenseLayer::init(w[0], w[1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::shape(
                    "layer bias",
                    layer.output_dim(),
                    layer.bias.len(),
                ));
            }
            if layer.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::Config(format!(
                    "softmax is only allowed on the final layer (found on layer {i})"
                )));
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("layer {i} has non-finite parameters")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    "layer chaining",
                    format!("layer {} input {}", i + 1, pair[0].output_dim()),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(DenseNetwork {
            layers,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable parameter access. Invalidates any cached forward pass.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.cache = None;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, batch: &ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::shape(
                "network input",
                format!("{} columns", self.input_dim()),
                format!("{} columns", batch.ncols()),
            ));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("network input contains non-finite values".into()));
        }
        Ok(())
    }

    fn layer_forward(layer: &DenseLayer, input: &ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = input.dot(&layer.weights);
        z += &layer.bias;
        layer.activation.apply(&mut z);
        z
    }

    /// Inference without caching.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&batch)?;
        let mut current = Self::layer_forward(&self.layers[0], &batch);
        for layer in &self.layers[1..] {
            current = Self::layer_forward(layer, &current.view());
        }
        Ok(current)
    }

    /// Forward pass that keeps every intermediate activation for [`Self::backward`].
    pub fn forward(&mut self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.to_owned());
        for layer in &self.layers {
            let next = Self::layer_forward(layer, &activations[activations.len() - 1].view());
            activations.push(next);
        }
        let out = activations[activations.len() - 1].clone();
        self.cache = Some(ForwardCache { activations });
        Ok(out)
    }

    /// Gradients given `upstream`, the loss gradient with respect to the
    /// network output of the most recent [`Self::forward`].
    pub fn backward(&self, upstream: ArrayView2<'_, f64>) -> Result<Gradients> {
        let cache = self.cached()?;
        let out = &cache.activations[cache.activations.len() - 1];
        check_upstream(out, &upstream)?;
        let last = &self.layers[self.layers.len() - 1];
        let delta = last.activation.backprop(out, &upstream.to_owned());
        Ok(self.backprop_from(cache, delta))
    }

    /// Like [`Self::backward`] but `delta` is the gradient with respect to the
    /// final layer's pre-activation. Used for the fused sigmoid/softmax
    /// cross-entropy gradients, which stay accurate when outputs saturate.
    pub fn backward_from_preactivation(&self, delta: ArrayView2<'_, f64>) -> Result<Gradients> {
        let cache = self.cached()?;
        let out = &cache.activations[cache.activations.len() - 1];
        check_upstream(out, &delta)?;
        Ok(self.backprop_from(cache, delta.to_owned()))
    }

    fn cached(&self) -> Result<&ForwardCache> {
        self.cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a preceding forward".into()))
    }

    fn backprop_from(&self, cache: &ForwardCache, mut delta: Array2<f64>) -> Gradients {
        let n_layers = self.layers.len();
        let mut grads = Vec::with_capacity(n_layers);
        for i in (0..n_layers).rev() {
            let layer = &self.layers[i];
            let input = &cache.activations[i];
            let weights = input.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            let upstream = delta.dot(&layer.weights.t());
            grads.push(LayerGradient { weights, bias });
            delta = if i > 0 {
                self.layers[i - 1]
                    .activation
                    .backprop(&cache.activations[i], &upstream)
            } else {
                upstream
            };
        }
        grads.reverse();
        Gradients {
            layers: grads,
            input: delta,
        }
    }
}

fn check_upstream(out: &Array2<f64>, upstream: &ArrayView2<'_, f64>) -> Result<()> {
    if out.dim() != upstream.dim() {
        return Err(Error::shape(
            "upstream gradient",
            format!("{:?}", out.dim()),
            format!("{:?}", upstream.dim()),
        ));
    }
    Ok(())
}
