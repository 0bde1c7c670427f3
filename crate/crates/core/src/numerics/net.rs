//! Dense feed-forward networks with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LeonError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "id")]
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer, `act(W x + b)`. Weights are stored row-major with one
/// row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

impl Layer {
    pub fn from_rows(w: Vec<Vec<f64>>, b: Vec<f64>, activation: Activation) -> Result<Self> {
        let outputs = w.len();
        if outputs == 0 || outputs != b.len() {
            return Err(invalid("layer needs one bias per weight row"));
        }
        let inputs = w[0].len();
        if inputs == 0 || w.iter().any(|r| r.len() != inputs) {
            return Err(invalid("layer weight rows must share a non-zero width"));
        }
        Ok(Layer { inputs, outputs, weights: w.concat(), biases: b, activation })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.inputs).map(<[f64]>::to_vec).collect()
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            out.push(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b);
        }
    }
}

/// Scalar-output multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetRepr", into = "NetRepr")]
pub struct DenseNet {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct NetRepr {
    layers: Vec<LayerRepr>,
}

impl TryFrom<NetRepr> for DenseNet {
    type Error = LeonError;

    fn try_from(repr: NetRepr) -> Result<Self> {
        let layers = repr
            .layers
            .into_iter()
            .map(|l| Layer::from_rows(l.w, l.b, l.act))
            .collect::<Result<Vec<_>>>()?;
        DenseNet::from_layers(layers)
    }
}

impl From<DenseNet> for NetRepr {
    fn from(net: DenseNet) -> Self {
        NetRepr {
            layers: net
                .layers
                .iter()
                .map(|l| LayerRepr { w: l.rows(), b: l.biases.clone(), act: l.activation })
                .collect(),
        }
    }
}

/// Parameter-shaped gradient (or any parameter-shaped buffer).
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrad {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetGrad {
    fn zeros_like(net: &DenseNet) -> Self {
        NetGrad {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(&self.biases).flatten().copied()
    }

    /// Flattened in the same order as [`DenseNet::params`].
    pub fn to_param_order(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b)).copied().collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).flatten().for_each(|g| *g *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(invalid("network needs at least one layer"));
        };
        if last.outputs != 1 || last.activation != Activation::Identity {
            return Err(invalid("final layer must be a single identity unit"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(invalid(format!(
                    "layer widths {} and {} do not chain",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    /// Rectified-linear hidden layers of the given widths, identity scalar
    /// output, parameters uniform in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], scale: f64, rng: &mut R) -> Self {
        Self::build(inputs, hidden, |_| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 })
    }

    /// Glorot-uniform initialization, for regression nets.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(inputs, hidden);
        for layer in &mut net.layers {
            let a = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-a..=a));
        }
        net
    }

    pub fn zeros(inputs: usize, hidden: &[usize]) -> Self {
        Self::build(inputs, hidden, |_| 0.0)
    }

    fn build(inputs: usize, hidden: &[usize], mut init: impl FnMut(usize) -> f64) -> Self {
        let mut widths = vec![inputs];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                Layer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out).map(&mut init).collect(),
                    biases: (0..fan_out).map(&mut init).collect(),
                    activation: if i + 1 == n { Activation::Identity } else { Activation::Relu },
                }
            })
            .collect();
        DenseNet { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases)).copied()
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params().fold(0.0, |m, p| m.max(p.abs()))
    }

    /// Mutable access to parameter `i` in [`params`](Self::params) order.
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights[i];
            }
            i -= l.weights.len();
            if i < l.biases.len() {
                return &mut l.biases[i];
            }
            i -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Upper bound on the Lipschitz constant: product of layer Frobenius
    /// norms (rectified-linear units are 1-Lipschitz).
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>().sqrt())
            .product()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.affine(&a, &mut z);
            a.clear();
            a.extend(z.iter().map(|v| layer.activation.apply(*v)));
        }
        a[0]
    }

    /// Adds `coeff * d net(x) / d theta` into `grad`.
    fn accumulate(&self, x: &[f64], coeff: f64, grad: &mut NetGrad) {
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let mut z = Vec::new();
            layer.affine(&a, &mut z);
            let next = z.iter().map(|v| layer.activation.apply(*v)).collect();
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        let mut delta = vec![coeff];
        for (li, layer) in self.layers.iter().enumerate().rev() {
            for (d, z) in delta.iter_mut().zip(&pre[li]) {
                *d *= layer.activation.derivative(*z);
            }
            let input = &inputs[li];
            let gw = &mut grad.weights[li];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                grad.biases[li][o] += d;
                for (g, v) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            if li > 0 {
                let mut back = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (b, w) in back.iter_mut().zip(row) {
                        *b += d * w;
                    }
                }
                delta = back;
            }
        }
    }

    /// Gradient of `mean(net(pos)) - mean(net(neg))` with respect to every
    /// parameter.
    pub fn dual_gradient(&self, pos: &[Vec<f64>], neg: &[Vec<f64>]) -> Result<NetGrad> {
        if pos.is_empty() || neg.is_empty() {
            return Err(invalid("both batches must be non-empty"));
        }
        // separate buffers so identical batches cancel exactly
        let mut parts = [NetGrad::zeros_like(self), NetGrad::zeros_like(self)];
        for (batch, part) in [pos, neg].into_iter().zip(parts.iter_mut()) {
            let c = 1.0 / batch.len() as f64;
            for x in batch {
                self.check_input(x)?;
                self.accumulate(x, c, part);
            }
        }
        let [mut grad, neg_part] = parts;
        let dst = grad.weights.iter_mut().chain(grad.biases.iter_mut()).flatten();
        let src = neg_part.weights.iter().chain(&neg_part.biases).flatten();
        dst.zip(src).for_each(|(g, n)| *g -= n);
        Ok(grad)
    }

    /// Gradient of the mean squared error over `(xs, ys)`; also returns the loss.
    pub fn mse_gradient(&self, xs: &[Vec<f64>], ys: &[f64]) -> Result<(f64, NetGrad)> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(invalid("regression batch must be non-empty and aligned"));
        }
        let n = xs.len() as f64;
        let mut grad = NetGrad::zeros_like(self);
        let mut loss = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            self.check_input(x)?;
            let r = self.forward_unchecked(x) - y;
            loss += r * r / n;
            self.accumulate(x, 2.0 * r / n, &mut grad);
        }
        Ok((loss, grad))
    }

    fn check_grad(&self, grad: &NetGrad) -> Result<()> {
        let shapes_match = grad.weights.len() == self.layers.len()
            && self.layers.iter().zip(&grad.weights).all(|(l, g)| l.weights.len() == g.len())
            && self.layers.iter().zip(&grad.biases).all(|(l, g)| l.biases.len() == g.len());
        if !shapes_match {
            return Err(invalid("gradient shape does not match the network"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(LeonError::Numeric("non-finite gradient".into()));
        }
        Ok(())
    }

    /// Ascent step `theta += lr * grad`, then clamps every parameter to
    /// `[-clip, clip]` when `clip` is set. The network is left untouched on
    /// error.
    pub fn sgd_step(&mut self, grad: &NetGrad, lr: f64, clip: Option<f64>) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        self.check_grad(grad)?;
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let grads = grad.weights[li].iter().chain(&grad.biases[li]);
            for (p, g) in params.zip(grads) {
                *p += lr * g;
                if let Some(c) = clip {
                    *p = p.clamp(-c, c);
                }
            }
        }
        Ok(())
    }

    pub fn clip_params(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|p| *p = p.clamp(-c, c));
        }
    }
}

/// Adam first-order optimizer state, used for surrogate regression.
#[derive(Debug, Clone)]
pub struct Adam {
    m: NetGrad,
    v: NetGrad,
    t: i32,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Adam {
            m: NetGrad::zeros_like(net),
            v: NetGrad::zeros_like(net),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Descent step on a loss gradient.
    pub fn step(&mut self, net: &mut DenseNet, grad: &NetGrad) -> Result<()> {
        net.check_grad(grad)?;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let groups = [
                (&mut layer.weights, &grad.weights[li], &mut self.m.weights[li], &mut self.v.weights[li]),
                (&mut layer.biases, &grad.biases[li], &mut self.m.biases[li], &mut self.v.biases[li]),
            ];
            for (params, g, m, v) in groups {
                for i in 0..params.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    params[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}
