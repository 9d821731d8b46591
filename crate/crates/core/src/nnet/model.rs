use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix};

/// Probabilities below this are clamped before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-300;

/// Hidden-layer nonlinearity. The output layer is always the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    // ReLU'(0) = 0.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer; `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Where the perturbation (and the reported input gradient) enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Entry {
    #[default]
    Input,
    /// The output of the encoder, i.e. the activation feeding layer `encoder_split`.
    Latent,
}

/// Scalar objectives the backward pass knows how to differentiate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective<'a> {
    CrossEntropy { label: usize },
    /// Entropy of the softmax output (natural log).
    Entropy,
    /// `KL(reference ‖ softmax(logits))`, reference held constant.
    Divergence { reference: &'a [f64] },
}

/// Multi-layer perceptron: ReLU (or identity) hidden layers, identity output.
///
/// Layers with index `< encoder_split` form the encoder E; the rest form the
/// classifier head. `encoder_split == 0` makes E the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    activation: Activation,
    encoder_split: usize,
}

/// Gradients of one layer, shaped like [`Layer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Parameter and entry-point gradients of a scalar objective.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    /// Objective value at the evaluated point (0 when built from a raw seed).
    pub value: f64,
    pub param_grads: Vec<LayerGrad>,
    pub input_grad: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by [`MlpModel::backprop`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// `acts[l]` is the input to layer `l`; `acts[L]` are the logits.
    acts: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
}

impl Tape {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("tape has at least one activation")
    }

    /// Input to layer `l` (after any latent shift).
    pub fn activation(&self, l: usize) -> &[f64] {
        &self.acts[l]
    }
}

impl MlpModel {
    /// Zero-initialised network with the given layer widths (`[d, h1, ..., C]`).
    pub fn new(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::config("a network needs at least an input and an output width"));
        }
        if layer_dims.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layers,
            activation: Activation::Relu,
            encoder_split: 0,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation, encoder_split: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::config(format!(
                    "layer {l} outputs {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    l + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::config(format!("layer {l} bias length mismatch")));
            }
        }
        let model = Self {
            layers,
            activation,
            encoder_split: 0,
        };
        model.with_encoder_split(encoder_split)
    }

    pub fn with_encoder_split(mut self, split: usize) -> Result<Self> {
        if split > self.layers.len() {
            return Err(Error::config(format!(
                "encoder split {split} outside [0, {}]",
                self.layers.len()
            )));
        }
        self.encoder_split = split;
        Ok(self)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn encoder_split(&self) -> usize {
        self.encoder_split
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].input_dim())
            .chain(self.layers.iter().map(Layer::output_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    /// Width of the encoder output.
    pub fn latent_dim(&self) -> usize {
        self.layer_dims()[self.encoder_split]
    }

    /// Width of the vector the gradient is reported against for `entry`.
    pub fn entry_dim(&self, entry: Entry) -> usize {
        match entry {
            Entry::Input => self.input_dim(),
            Entry::Latent => self.latent_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Parameter tensors in a fixed order: for each layer, weights then bias.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn params(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    /// Draws weights from `U(-1/√fan_in, 1/√fan_in)` and zeroes the biases.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let bound = 1.0 / (layer.input_dim() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for w in layer.weights.as_mut_slice() {
                *w = dist.sample(&mut rng);
            }
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    fn is_last(&self, l: usize) -> bool {
        l + 1 == self.layers.len()
    }

    fn layer_forward(&self, l: usize, input: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let layer = &self.layers[l];
        let mut pre = layer.weights.matvec(input);
        for (p, b) in pre.iter_mut().zip(&layer.bias) {
            *p += b;
        }
        if pre.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                layer: l,
                stage: "forward",
            });
        }
        let post = if self.is_last(l) {
            pre.clone()
        } else {
            pre.iter().map(|&v| self.activation.apply(v)).collect()
        };
        Ok((pre, post))
    }

    /// Logits `C(E(x))`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_shifted(x, None)
    }

    /// Logits `C(E(x) + shift)`; `shift` lives in the latent space.
    pub fn forward_shifted(&self, x: &[f64], shift: Option<&[f64]>) -> Result<Vec<f64>> {
        check_dim("forward input", self.input_dim(), x.len())?;
        let mut a = x.to_vec();
        for l in 0..self.layers.len() {
            if l == self.encoder_split {
                self.apply_shift(&mut a, shift)?;
            }
            a = self.layer_forward(l, &a)?.1;
        }
        if self.encoder_split == self.layers.len() {
            self.apply_shift(&mut a, shift)?;
        }
        Ok(a)
    }

    fn apply_shift(&self, a: &mut [f64], shift: Option<&[f64]>) -> Result<()> {
        if let Some(s) = shift {
            check_dim("latent shift", a.len(), s.len())?;
            linalg::axpy(1.0, s, a);
        }
        Ok(())
    }

    /// Encoder output `E(x)`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("encoder input", self.input_dim(), x.len())?;
        let mut a = x.to_vec();
        for l in 0..self.encoder_split {
            a = self.layer_forward(l, &a)?.1;
        }
        Ok(a)
    }

    /// Classifier head applied to a latent vector.
    pub fn classify_latent(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim("latent input", self.latent_dim(), z.len())?;
        let mut a = z.to_vec();
        for l in self.encoder_split..self.layers.len() {
            a = self.layer_forward(l, &a)?.1;
        }
        Ok(a)
    }

    /// Forward pass that keeps every activation for a later [`backprop`](Self::backprop).
    pub fn forward_tape(&self, x: &[f64], shift: Option<&[f64]>) -> Result<Tape> {
        check_dim("forward input", self.input_dim(), x.len())?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for l in 0..self.layers.len() {
            if l == self.encoder_split {
                self.apply_shift(&mut a, shift)?;
            }
            let (pre, post) = self.layer_forward(l, &a)?;
            acts.push(a);
            pres.push(pre);
            a = post;
        }
        if self.encoder_split == self.layers.len() {
            self.apply_shift(&mut a, shift)?;
        }
        acts.push(a);
        Ok(Tape { acts, pres })
    }

    /// Reverse-mode pass from an arbitrary seed `∂objective/∂logits`.
    pub fn backprop(&self, tape: &Tape, dlogits: &[f64], entry: Entry) -> Result<GradBundle> {
        check_dim("logit seed", self.class_count(), dlogits.len())?;
        let n = self.layers.len();
        let entry_layer = match entry {
            Entry::Input => 0,
            Entry::Latent => self.encoder_split,
        };
        let mut param_grads: Vec<LayerGrad> = Vec::with_capacity(n);
        let mut upstream = dlogits.to_vec();
        let mut input_grad = if entry_layer == n {
            Some(upstream.clone())
        } else {
            None
        };
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let delta: Vec<f64> = if self.is_last(l) {
                upstream
            } else {
                upstream
                    .iter()
                    .zip(&tape.pres[l])
                    .map(|(g, &p)| g * self.activation.derivative(p))
                    .collect()
            };
            let a_in = &tape.acts[l];
            let mut wg = Matrix::zeros(layer.output_dim(), layer.input_dim());
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (g, &a) in wg.row_mut(r).iter_mut().zip(a_in) {
                        *g = d * a;
                    }
                }
            }
            upstream = layer.weights.matvec_t(&delta);
            if upstream.iter().chain(&delta).any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: l,
                    stage: "backward",
                });
            }
            param_grads.push(LayerGrad {
                weights: wg,
                bias: delta,
            });
            if l == entry_layer {
                input_grad = Some(upstream.clone());
            }
        }
        param_grads.reverse();
        Ok(GradBundle {
            value: 0.0,
            param_grads,
            input_grad: input_grad.expect("entry layer visited"),
        })
    }

    /// Gradients of `objective(C(E(x)))` w.r.t. parameters and the entry point.
    pub fn backward(&self, x: &[f64], objective: Objective<'_>, entry: Entry) -> Result<GradBundle> {
        self.backward_shifted(x, None, objective, entry)
    }

    /// As [`backward`](Self::backward), evaluated at `C(E(x) + shift)`.
    pub fn backward_shifted(
        &self,
        x: &[f64],
        shift: Option<&[f64]>,
        objective: Objective<'_>,
        entry: Entry,
    ) -> Result<GradBundle> {
        let tape = self.forward_tape(x, shift)?;
        let (value, seed) = objective_seed(tape.logits(), objective)?;
        let mut g = self.backprop(&tape, &seed, entry)?;
        g.value = value;
        Ok(g)
    }
}

/// Objective value and its gradient w.r.t. the logits.
pub(crate) fn objective_seed(logits: &[f64], objective: Objective<'_>) -> Result<(f64, Vec<f64>)> {
    let p = softmax(logits);
    match objective {
        Objective::CrossEntropy { label } => {
            if label >= p.len() {
                return Err(Error::domain(format!(
                    "label {label} out of range for {} classes",
                    p.len()
                )));
            }
            let value = -p[label].max(PROB_FLOOR).ln();
            let mut seed = p;
            seed[label] -= 1.0;
            Ok((value, seed))
        }
        Objective::Entropy => {
            let h = entropy_of(&p);
            // ∂H/∂z_c = -p_c (ln p_c + H)
            let seed = p
                .iter()
                .map(|&pc| -pc * (pc.max(PROB_FLOOR).ln() + h))
                .collect();
            Ok((h, seed))
        }
        Objective::Divergence { reference } => {
            check_dim("divergence reference", p.len(), reference.len())?;
            let value = kl_divergence(reference, &p);
            let seed = p.iter().zip(reference).map(|(pc, qc)| pc - qc).collect();
            Ok((value, seed))
        }
    }
}

/// Overflow-safe softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    objective_seed(logits, Objective::CrossEntropy { label }).map(|(v, _)| v)
}

/// Shannon entropy in nats with `0·log 0 = 0`.
pub fn entropy_of(p: &[f64]) -> f64 {
    -p.iter().map(|&pc| pc * pc.max(PROB_FLOOR).ln()).sum::<f64>()
}

/// `KL(p ‖ q)` in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pc, &qc)| {
            if pc <= 0.0 {
                0.0
            } else {
                pc * (pc.max(PROB_FLOOR).ln() - qc.max(PROB_FLOOR).ln())
            }
        })
        .sum()
}

impl GradBundle {
    pub fn zeros_like(model: &MlpModel, entry: Entry) -> Self {
        Self {
            value: 0.0,
            param_grads: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.output_dim(), l.input_dim()),
                    bias: vec![0.0; l.output_dim()],
                })
                .collect(),
            input_grad: vec![0.0; model.entry_dim(entry)],
        }
    }

    /// Parameter gradients in the same order as [`MlpModel::params`].
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.param_grads
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.param_grads
            .iter_mut()
            .flat_map(|g| [g.weights.as_mut_slice(), g.bias.as_mut_slice()])
    }

    /// `self += scale * other` on parameters, input gradient and value.
    pub fn add_scaled(&mut self, other: &GradBundle, scale: f64) {
        self.value += scale * other.value;
        for (dst, src) in self.tensors_mut().zip(other.tensors()) {
            linalg::axpy(scale, src, dst);
        }
        if self.input_grad.len() == other.input_grad.len() {
            linalg::axpy(scale, &other.input_grad, &mut self.input_grad);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.value *= factor;
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
        self.input_grad.iter_mut().for_each(|v| *v *= factor);
    }

    /// Euclidean norm over all parameter gradients.
    pub fn param_norm(&self) -> f64 {
        self.tensors()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Largest absolute difference between two bundles' parameter gradients.
    pub fn max_param_diff(&self, other: &GradBundle) -> f64 {
        self.tensors()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}
