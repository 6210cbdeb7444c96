//! Fully connected multilayer perceptron with hand-derived backpropagation.
//!
//! Hidden layers share one activation; the output layer is bound to the loss:
//! linear output for MSE, sigmoid output for BCE. With that pairing the
//! gradient of the loss with respect to the output pre-activation is
//! `(pred - target) / N` for both losses, which is what [`backward`] seeds
//! the recursion with.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{col_sum, hadamard, product, transpose, Matrix};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(ActivationKind::Relu),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            other => Err(Error::config("activation", format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Bce,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Bce => "bce",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "bce" => Ok(LossKind::Bce),
            other => Err(Error::config("loss", format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Input width first, output width last.
    pub layer_widths: Vec<usize>,
    pub activation: ActivationKind,
    pub loss: LossKind,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            layer_widths: vec![16, 32, 1],
            activation: ActivationKind::Relu,
            loss: LossKind::Mse,
            learning_rate: 0.05,
            seed: 42,
        }
    }
}

impl NetworkConfig {
    pub fn validate_architecture(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::config(
                "layer_widths",
                "need at least an input and an output width",
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::config("layer_widths", "every width must be at least 1"));
        }
        Ok(())
    }

    /// Full validation, including a strictly positive learning rate.
    pub fn validate(&self) -> Result<()> {
        self.validate_architecture()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate",
                format!("must be a positive finite number, got {}", self.learning_rate),
            ));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated widths")
    }
}

/// One fully connected layer: `fan_in x fan_out` weights and a `1 x fan_out`
/// bias row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub biases: Matrix,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Layer>,
}

/// Gradients have exactly the layout of the parameters they belong to.
pub type Grads = Params;

impl Params {
    /// Checks that layer shapes chain and bias rows match.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Domain("params need at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.biases.shape() != (1, layer.fan_out()) {
                return Err(Error::shape("bias", layer.weights.shape(), layer.biases.shape()));
            }
            if i > 0 && layers[i - 1].fan_out() != layer.fan_in() {
                return Err(Error::shape(
                    "layer chain",
                    layers[i - 1].weights.shape(),
                    layer.weights.shape(),
                ));
            }
        }
        Ok(Params { layers })
    }

    pub fn zeros_like(&self) -> Params {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    biases: Matrix::zeros(1, l.fan_out()),
                })
                .collect(),
        }
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.layers[0].fan_in()];
        widths.extend(self.layers.iter().map(Layer::fan_out));
        widths
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.biases.data().len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.biases.is_finite())
    }

    /// Iterates every scalar: per layer, weights row-major then biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data().iter().chain(l.biases.data().iter()).copied())
    }

    pub fn add_in_place(&mut self, other: &Params) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_in_place(&b.weights)?;
            a.biases.add_in_place(&b.biases)?;
        }
        Ok(())
    }

    pub fn div_scalar_in_place(&mut self, divisor: f64) {
        for l in &mut self.layers {
            l.weights.div_scalar_in_place(divisor);
            l.biases.div_scalar_in_place(divisor);
        }
    }

    /// Largest absolute entrywise difference. Errors on layout mismatch.
    pub fn max_abs_diff(&self, other: &Params) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .values()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Bitwise equality of every scalar (distinguishes `0.0` from `-0.0`).
    pub fn bit_eq(&self, other: &Params) -> bool {
        self.layer_widths() == other.layer_widths()
            && self
                .values()
                .zip(other.values())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    fn check_same(&self, other: &Params) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Domain(format!(
                "layer count mismatch: {} vs {}",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (a, b) in self.layers.iter().zip(&other.layers) {
            if a.weights.shape() != b.weights.shape() {
                return Err(Error::shape("params", a.weights.shape(), b.weights.shape()));
            }
        }
        Ok(())
    }
}

/// Pre-activations `Z` and activations `A` of one forward pass.
/// `activations[0]` is the input batch; `pre_activations[l]` belongs to
/// layer `l` and produces `activations[l + 1]`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre_activations: Vec<Matrix>,
    pub activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("non-empty cache")
    }

    pub fn logits(&self) -> &Matrix {
        self.pre_activations.last().expect("non-empty cache")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].rows()
    }
}

/// Weights uniform in `[-0.5, 0.5)`, drawn layer by layer in row-major order
/// from `SplitMix64(config.seed)`; biases zero.
pub fn init_params(config: &NetworkConfig) -> Result<Params> {
    config.validate_architecture()?;
    let mut rng = SplitMix64::new(config.seed);
    let layers = config
        .layer_widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let data = (0..fan_in * fan_out).map(|_| rng.next_range(-0.5, 0.5)).collect();
            Layer {
                weights: Matrix::new(fan_in, fan_out, data).expect("positive widths"),
                biases: Matrix::zeros(1, fan_out),
            }
        })
        .collect();
    Ok(Params { layers })
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn activate(kind: ActivationKind, z: &Matrix) -> Matrix {
    match kind {
        ActivationKind::Relu => z.map(|x| if x > 0.0 { x } else { 0.0 }),
        ActivationKind::Sigmoid => z.map(sigmoid),
    }
}

/// ReLU' is 1 for `z > 0` and 0 otherwise, including at `z == 0`.
pub fn activate_deriv(kind: ActivationKind, z: &Matrix) -> Matrix {
    match kind {
        ActivationKind::Relu => z.map(|x| if x > 0.0 { 1.0 } else { 0.0 }),
        ActivationKind::Sigmoid => z.map(|x| {
            let s = sigmoid(x);
            s * (1.0 - s)
        }),
    }
}

fn check_loss_inputs(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("loss", pred.shape(), target.shape()));
    }
    if kind == LossKind::Bce {
        if let Some(p) = pred.data().iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Domain(format!(
                "BCE prediction {p} outside the open interval (0, 1)"
            )));
        }
    }
    Ok(())
}

/// Batch-mean loss. MSE carries a factor 1/2.
pub fn loss_value(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<f64> {
    check_loss_inputs(kind, pred, target)?;
    let n = pred.rows() as f64;
    let pairs = pred.data().iter().zip(target.data());
    let total: f64 = match kind {
        LossKind::Mse => pairs.map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / (2.0 * n),
        LossKind::Bce => -pairs.map(|(p, t)| t * p.ln() + (1.0 - t) * (1.0 - p).ln()).sum::<f64>() / n,
    };
    Ok(total)
}

/// `(pred - target) / N`. For MSE this is the gradient with respect to the
/// (linear) prediction; for BCE it is the gradient with respect to the output
/// pre-activation, with the final sigmoid folded in.
pub fn loss_grad(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    check_loss_inputs(kind, pred, target)?;
    output_delta(pred, target, pred.rows() as f64)
}

fn output_delta(pred: &Matrix, target: &Matrix, denominator: f64) -> Result<Matrix> {
    let mut delta = pred.sub(target)?;
    if denominator != 1.0 {
        delta.div_scalar_in_place(denominator);
    }
    Ok(delta)
}

/// Loss of a cached forward pass, computed from logits for BCE so that a
/// saturated sigmoid never produces a spurious infinity.
pub(crate) fn cached_loss(kind: LossKind, cache: &ForwardCache, target: &Matrix) -> f64 {
    let n = cache.batch_size() as f64;
    match kind {
        LossKind::Mse => {
            let pred = cache.output();
            pred.data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / (2.0 * n)
        }
        LossKind::Bce => {
            let z = cache.logits();
            z.data()
                .iter()
                .zip(target.data())
                .map(|(z, t)| z.max(0.0) - t * z + (-z.abs()).exp().ln_1p())
                .sum::<f64>()
                / n
        }
    }
}

fn check_params(params: &Params, config: &NetworkConfig) -> Result<()> {
    let widths = params.layer_widths();
    if widths != config.layer_widths {
        return Err(Error::Domain(format!(
            "params have widths {widths:?}, config expects {:?}",
            config.layer_widths
        )));
    }
    Ok(())
}

/// Forward pass over a batch (one sample per row).
pub fn forward(params: &Params, input: &Matrix, config: &NetworkConfig) -> Result<(Matrix, ForwardCache)> {
    let cache = forward_cache(params, input, config)?;
    Ok((cache.output().clone(), cache))
}

pub(crate) fn forward_cache(params: &Params, input: &Matrix, config: &NetworkConfig) -> Result<ForwardCache> {
    check_params(params, config)?;
    if input.cols() != config.input_width() {
        return Err(Error::shape("forward", input.shape(), params.layers[0].weights.shape()));
    }
    let depth = params.layers.len();
    let mut pre_activations = Vec::with_capacity(depth);
    let mut activations = Vec::with_capacity(depth + 1);
    activations.push(input.clone());
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = product(&activations[l], &layer.weights)?;
        z.add_row_in_place(&layer.biases)?;
        let a = if l + 1 < depth {
            activate(config.activation, &z)
        } else {
            match config.loss {
                LossKind::Mse => z.clone(),
                LossKind::Bce => activate(ActivationKind::Sigmoid, &z),
            }
        };
        pre_activations.push(z);
        activations.push(a);
    }
    Ok(ForwardCache {
        pre_activations,
        activations,
    })
}

/// Batch-mean gradients of the loss with respect to every parameter.
pub fn backward(params: &Params, cache: &ForwardCache, target: &Matrix, config: &NetworkConfig) -> Result<Grads> {
    backward_scaled(params, cache, target, config, cache.batch_size() as f64)
}

/// Backpropagation with an explicit normalizer in the output delta. A
/// normalizer of 1 yields gradient sums rather than means.
pub(crate) fn backward_scaled(
    params: &Params,
    cache: &ForwardCache,
    target: &Matrix,
    config: &NetworkConfig,
    denominator: f64,
) -> Result<Grads> {
    check_params(params, config)?;
    let depth = params.layers.len();
    if cache.pre_activations.len() != depth || cache.activations.len() != depth + 1 {
        return Err(Error::Domain("forward cache does not match params depth".into()));
    }
    let pred = cache.output();
    if pred.shape() != target.shape() {
        return Err(Error::shape("backward", pred.shape(), target.shape()));
    }

    let mut layers = Vec::with_capacity(depth);
    let mut delta = output_delta(pred, target, denominator)?;
    for l in (0..depth).rev() {
        let weights = product(&transpose(&cache.activations[l]), &delta)?;
        let biases = col_sum(&delta);
        if l > 0 {
            let back = product(&delta, &transpose(&params.layers[l].weights))?;
            delta = hadamard(&back, &activate_deriv(config.activation, &cache.pre_activations[l - 1]))?;
        }
        layers.push(Layer { weights, biases });
    }
    layers.reverse();
    Ok(Params { layers })
}

/// `p <- p - learning_rate * g` for every parameter.
pub fn apply_update(params: &mut Params, grads: &Grads, learning_rate: f64) -> Result<()> {
    params.check_same(grads)?;
    for (p, g) in params.layers.iter_mut().zip(&grads.layers) {
        p.weights.sub_scaled_in_place(&g.weights, learning_rate)?;
        p.biases.sub_scaled_in_place(&g.biases, learning_rate)?;
    }
    Ok(())
}
