//! Dense feed-forward networks with analytic backpropagation and plain SGD.
//!
//! Weights are stored row-major (`out x in`). Everything runs in `f64` and
//! on a single thread, so a given seed and batch order always produce the
//! same parameters bit for bit.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative in terms of the pre-activation `z` and activation `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Row-major, `output_dim` rows of `input_dim` weights.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        weights: Vec<f64>,
        biases: Vec<f64>,
        input_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let output_dim = biases.len();
        if weights.len() != input_dim * output_dim {
            return Err(Error::Contract(format!(
                "layer with {output_dim} outputs and {input_dim} inputs needs {} weights, got {}",
                input_dim * output_dim,
                weights.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::Contract("layer parameters must be finite".into()));
        }
        Ok(DenseLayer {
            input_dim,
            output_dim,
            weights,
            biases,
            activation,
        })
    }

    /// He initialization for relu layers, Xavier otherwise. Biases start at 0.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let std = match activation {
            Activation::Relu => (2.0 / input_dim.max(1) as f64).sqrt(),
            _ => (2.0 / (input_dim + output_dim).max(1) as f64).sqrt(),
        };
        let normal = Normal::new(0.0, std).expect("finite std");
        DenseLayer {
            input_dim,
            output_dim,
            weights: (0..input_dim * output_dim).map(|_| normal.sample(rng)).collect(),
            biases: vec![0.0; output_dim],
            activation,
        }
    }

    fn forward_into(&self, x: &[f64], pre: &mut Vec<f64>, post: &mut Vec<f64>) {
        pre.clear();
        post.clear();
        for (row, b) in self.weights.chunks_exact(self.input_dim.max(1)).zip(&self.biases) {
            let z = row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v);
            pre.push(z);
            post.push(self.activation.apply(z));
        }
        if self.input_dim == 0 {
            pre.clear();
            post.clear();
            for b in &self.biases {
                pre.push(*b);
                post.push(self.activation.apply(*b));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

/// Intermediates of one forward pass, needed by [`Network::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    /// Activation of the layer before the output layer; the network input
    /// for single-layer networks.
    pub fn last_hidden(&self) -> &[f64] {
        let n = self.activations.len();
        if n >= 2 {
            &self.activations[n - 2]
        } else {
            &self.input
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameter gradients shaped like a [`Network`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.biases.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NonFiniteGradient;

impl fmt::Display for NonFiniteGradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("non-finite gradient")
    }
}

impl Network {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim != pair[1].input_dim {
                return Err(Error::Contract(format!(
                    "layer dimensions do not chain: {} outputs feed {} inputs",
                    pair[0].output_dim, pair[1].input_dim
                )));
            }
        }
        Ok(Network { layers })
    }

    /// Randomly initialised network: `hidden` widths with `hidden_activation`,
    /// then an output layer with `output_activation`.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        hidden_activation: Activation,
        output_dim: usize,
        output_activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &width in hidden {
            layers.push(DenseLayer::random(fan_in, width, hidden_activation, rng));
            fan_in = width;
        }
        layers.push(DenseLayer::random(fan_in, output_dim, output_activation, rng));
        Network { layers }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.output_dim).unwrap_or(0)
    }

    /// Width of the layer feeding the output layer (the input width for a
    /// single-layer network).
    pub fn last_hidden_dim(&self) -> usize {
        let n = self.layers.len();
        self.layers[n - 1].input_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    /// # Panics
    ///
    /// If `x.len()` differs from the input dimension.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, ForwardTrace) {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = activations.last().map(Vec::as_slice).unwrap_or(x);
            let mut pre = Vec::with_capacity(layer.output_dim);
            let mut post = Vec::with_capacity(layer.output_dim);
            layer.forward_into(input, &mut pre, &mut post);
            pre_activations.push(pre);
            activations.push(post);
        }
        let trace = ForwardTrace {
            input: x.to_vec(),
            pre_activations,
            activations,
        };
        (trace.output().to_vec(), trace)
    }

    /// Output only, without caching intermediates.
    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        let mut scratch = Scratch::default();
        self.output_with(x, &mut scratch).to_vec()
    }

    /// Output only, reusing `scratch` buffers between calls.
    pub fn output_with<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let Scratch { a, b, pre } = scratch;
        a.clear();
        a.extend_from_slice(x);
        for layer in &self.layers {
            layer.forward_into(a, pre, b);
            std::mem::swap(a, b);
        }
        a
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.output(x)).collect()
    }

    /// Gradients of a loss with respect to every parameter and the input,
    /// given `d_output` = dLoss/dy for the pass recorded in `trace`.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &[f64]) -> (Gradients, Vec<f64>) {
        let mut grads = Gradients::zeros_like(self);
        let dx = self.backward_into(trace, d_output, None, &mut grads);
        (grads, dx)
    }

    /// Like [`backward`](Self::backward) but accumulates into `grads`.
    ///
    /// `inject` adds an extra gradient dLoss/d(activation of layer `l`),
    /// which is how a second network reading a hidden layer chains its loss
    /// into this one.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        d_output: &[f64],
        inject: Option<(usize, &[f64])>,
        grads: &mut Gradients,
    ) -> Vec<f64> {
        assert_eq!(d_output.len(), self.output_dim(), "output gradient dimension mismatch");
        let mut d_post = d_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if let Some((at, extra)) = inject {
                if at == l {
                    assert_eq!(extra.len(), d_post.len(), "injected gradient dimension mismatch");
                    for (d, e) in d_post.iter_mut().zip(extra) {
                        *d += e;
                    }
                }
            }
            let pre = &trace.pre_activations[l];
            let post = &trace.activations[l];
            let input = if l == 0 {
                &trace.input
            } else {
                &trace.activations[l - 1]
            };
            let d_pre: Vec<f64> = d_post
                .iter()
                .zip(pre.iter().zip(post))
                .map(|(d, (&z, &a))| d * layer.activation.derivative(z, a))
                .collect();
            let g = &mut grads.layers[l];
            let mut d_input = vec![0.0; layer.input_dim];
            for (o, &dz) in d_pre.iter().enumerate() {
                g.biases[o] += dz;
                if dz == 0.0 {
                    continue;
                }
                let row = o * layer.input_dim;
                for i in 0..layer.input_dim {
                    g.weights[row + i] += dz * input[i];
                    d_input[i] += dz * layer.weights[row + i];
                }
            }
            d_post = d_input;
        }
        d_post
    }

    /// `w <- w - lr * (grad + weight_decay * w)`; biases are not decayed.
    pub fn sgd_step(
        &mut self,
        grads: &Gradients,
        learning_rate: f64,
        weight_decay: f64,
    ) -> std::result::Result<(), NonFiniteGradient> {
        if !grads.is_finite() {
            return Err(NonFiniteGradient);
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, dw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * (dw + weight_decay * *w);
            }
            for (b, db) in layer.biases.iter_mut().zip(&g.biases) {
                *b -= learning_rate * db;
            }
        }
        Ok(())
    }
}

/// Reusable buffers for [`Network::output_with`].
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
    pre: Vec<f64>,
}

/// Loss of a network output together with its gradient.
pub type LossFn = dyn Fn(&[f64]) -> (f64, Vec<f64>);

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-7);
    (analytic - numeric).abs() / scale
}

/// Central finite difference of `f` with respect to the `index`-th
/// parameter of `net`.
pub fn numeric_parameter_derivative(
    net: &mut Network,
    index: usize,
    eps: f64,
    f: &mut dyn FnMut(&Network) -> f64,
) -> f64 {
    let original = *net.parameters().nth(index).expect("parameter index");
    *net.parameters_mut().nth(index).unwrap() = original + eps;
    let plus = f(net);
    *net.parameters_mut().nth(index).unwrap() = original - eps;
    let minus = f(net);
    *net.parameters_mut().nth(index).unwrap() = original;
    (plus - minus) / (2.0 * eps)
}

/// Maximum relative error between supplied analytic gradients and central
/// finite differences of `loss(net(x))`, over every parameter and every
/// input coordinate. `loss` returns the loss and dLoss/dy.
pub fn compare_gradients(
    net: &Network,
    x: &[f64],
    loss: &LossFn,
    analytic: &Gradients,
    analytic_input: &[f64],
    eps: f64,
) -> f64 {
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (index, a) in analytic.values().enumerate() {
        let n = numeric_parameter_derivative(&mut probe, index, eps, &mut |net| {
            loss(&net.output(x)).0
        });
        worst = worst.max(relative_error(*a, n));
    }
    let mut xp = x.to_vec();
    for (i, a) in analytic_input.iter().enumerate() {
        let original = xp[i];
        xp[i] = original + eps;
        let plus = loss(&net.output(&xp)).0;
        xp[i] = original - eps;
        let minus = loss(&net.output(&xp)).0;
        xp[i] = original;
        worst = worst.max(relative_error(*a, (plus - minus) / (2.0 * eps)));
    }
    worst
}

/// Backpropagates `loss` at `x` and compares against finite differences.
pub fn gradient_check(
    net: &Network,
    x: &[f64],
    loss: &LossFn,
    eps: f64,
) -> f64 {
    let (y, trace) = net.forward(x);
    let (_, dy) = loss(&y);
    let (grads, dx) = net.backward(&trace, &dy);
    compare_gradients(net, x, loss, &grads, &dx, eps)
}

/// Half squared distance to `target`: a smooth loss for gradient checks.
pub fn squared_loss(target: Vec<f64>) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
    move |y: &[f64]| {
        let d: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
        (0.5 * d.iter().map(|v| v * v).sum::<f64>(), d)
    }
}
