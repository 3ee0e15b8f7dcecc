//! Dense feedforward networks with dropout, a softmax classifier head or a
//! dueling Q head, and hand-written reverse-mode gradients.
//!
//! Parameters live in one flat `Vec<f64>` laid out layer by layer (hidden
//! layers first, then the head layers), each layer as a row-major
//! `[outputs][inputs]` weight block followed by its bias vector. Gradients
//! share that layout, which keeps the optimizer and checkpoint code trivial.

mod checkpoint;
mod loss;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use loss::{nll_loss_and_grad, td_loss_and_grad, td_targets};
pub use optim::{apply_gradients, Adam, AdamConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {got} components, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("gradient has {got} entries, network has {expected} parameters")]
    GradientShape { expected: usize, got: usize },
    #[error("training diverged: non-finite gradient component at index {index}")]
    Divergence { index: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("operation needs a {0:?} head")]
    WrongHead(HeadKind),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Scalar value stream plus advantage stream, `Q = V + A - mean(A)`.
    QDueling,
    /// Linear logits followed by softmax.
    SoftmaxClassifier,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    /// Applied to every hidden activation in `Train` and `McSample` modes.
    pub dropout_rate: f64,
    pub head_kind: HeadKind,
    #[serde(default)]
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(NnError::InvalidSpec("input_dim must be positive".into()));
        }
        if self.output_dim < 2 {
            return Err(NnError::InvalidSpec("output_dim must be at least 2".into()));
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return Err(NnError::InvalidSpec("hidden layer widths must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(NnError::InvalidSpec(format!(
                "dropout_rate {} outside [0, 1]",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Width of the representation fed to the head.
    pub fn feature_dim(&self) -> usize {
        self.hidden_layers.last().copied().unwrap_or(self.input_dim)
    }

    pub fn parameter_count(&self) -> usize {
        let (hidden, head) = self.layout();
        hidden.iter().chain(head.iter()).map(Dense::size).sum()
    }

    fn layout(&self) -> (Vec<Dense>, Vec<Dense>) {
        let mut offset = 0;
        let mut push = |inputs: usize, outputs: usize| {
            let d = Dense {
                inputs,
                outputs,
                offset,
            };
            offset += d.size();
            d
        };
        let mut hidden = Vec::with_capacity(self.hidden_layers.len());
        let mut width = self.input_dim;
        for &h in &self.hidden_layers {
            hidden.push(push(width, h));
            width = h;
        }
        let head = match self.head_kind {
            HeadKind::SoftmaxClassifier => vec![push(width, self.output_dim)],
            HeadKind::QDueling => vec![push(width, 1), push(width, self.output_dim)],
        };
        (hidden, head)
    }
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Dense {
    fn size(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.inputs * self.outputs
    }

    fn affine(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let w = &params[self.offset..self.bias_offset()];
        let b = &params[self.bias_offset()..self.offset + self.size()];
        (0..self.outputs)
            .map(|j| {
                let row = &w[j * self.inputs..(j + 1) * self.inputs];
                b[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients for `dy` and returns `dL/dx`.
    fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dy: &[f64],
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Vec<f64> {
        let bias = self.bias_offset();
        let mut dx = if want_input_grad {
            vec![0.0; self.inputs]
        } else {
            Vec::new()
        };
        for (j, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = self.offset + j * self.inputs;
            for i in 0..self.inputs {
                grads[row + i] += g * x[i];
            }
            grads[bias + j] += g;
            if want_input_grad {
                for i in 0..self.inputs {
                    dx[i] += params[row + i] * g;
                }
            }
        }
        dx
    }
}

/// Per-hidden-unit multipliers: `0` for a dropped unit, `1/(1-p)` for a
/// kept one (inverted dropout, so evaluation needs no rescaling).
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    layers: Vec<Vec<f64>>,
}

impl DropoutMask {
    /// Draws a mask. Consumes no randomness when the dropout rate is zero.
    pub fn sample<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let p = spec.dropout_rate;
        if p == 0.0 {
            return Self::identity(spec);
        }
        let keep_scale = if p >= 1.0 { 0.0 } else { 1.0 / (1.0 - p) };
        let layers = spec
            .hidden_layers
            .iter()
            .map(|&h| {
                (0..h)
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep_scale })
                    .collect()
            })
            .collect();
        Self { layers }
    }

    pub fn identity(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec.hidden_layers.iter().map(|&h| vec![1.0; h]).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Vec<f64>>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Fresh dropout masks from the network's own stream.
    Train,
    /// Dropout disabled.
    Eval,
    /// Fresh dropout masks, used for Monte-Carlo uncertainty estimates.
    McSample,
}

/// Gradient of a scalar loss with respect to every network parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Mutable view of one dense layer's weights (`[outputs][inputs]`) and biases.
pub struct LayerMut<'a> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: &'a mut [f64],
    pub bias: &'a mut [f64],
}

#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    seed: u64,
    params: Vec<f64>,
    hidden: Vec<Dense>,
    head: Vec<Dense>,
    rng: ChaCha8Rng,
}

pub(crate) struct Trace {
    /// Input to each hidden layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    features: Vec<f64>,
    head_raw: Vec<f64>,
}

pub(crate) enum HeadGrad<'a> {
    Logits(&'a [f64]),
    Q(&'a [f64]),
}

impl Network {
    /// Builds a network with fan-in scaled uniform weights
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` and zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (hidden, head) = spec.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; spec.parameter_count()];
        for layer in hidden.iter().chain(head.iter()) {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut params[layer.offset..layer.bias_offset()] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(Self {
            spec,
            seed,
            params,
            hidden,
            head,
            rng,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Hidden layers, then the head layers (logits; or value then advantage).
    pub fn layer_count(&self) -> usize {
        self.hidden.len() + self.head.len()
    }

    pub fn layer_mut(&mut self, index: usize) -> LayerMut<'_> {
        let d = if index < self.hidden.len() {
            self.hidden[index]
        } else {
            self.head[index - self.hidden.len()]
        };
        let (w, rest) = self.params[d.offset..d.offset + d.size()].split_at_mut(d.inputs * d.outputs);
        LayerMut {
            inputs: d.inputs,
            outputs: d.outputs,
            weights: w,
            bias: rest,
        }
    }

    /// Copies parameters from a network with the same spec.
    pub fn copy_params_from(&mut self, other: &Network) {
        assert_eq!(self.spec, other.spec, "parameter copy between different specs");
        self.params.copy_from_slice(&other.params);
    }

    /// Draws a dropout mask from the network's own stream.
    pub fn sample_mask(&mut self) -> DropoutMask {
        DropoutMask::sample(&self.spec, &mut self.rng)
    }

    /// Q-values for a dueling head, class probabilities for a softmax head.
    pub fn forward(&mut self, input: &[f64], mode: Mode) -> Result<Vec<f64>> {
        let mask = match mode {
            Mode::Eval => None,
            Mode::Train | Mode::McSample => Some(self.sample_mask()),
        };
        self.forward_masked(input, mask.as_ref())
    }

    /// Eval-mode forward; needs no mutable access.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_masked(input, None)
    }

    pub fn forward_masked(&self, input: &[f64], mask: Option<&DropoutMask>) -> Result<Vec<f64>> {
        let trace = self.trace(input, mask)?;
        Ok(self.head_output(&trace.head_raw))
    }

    /// One output per mask. The first hidden layer's pre-activation does not
    /// depend on the mask, so it is computed once.
    pub fn forward_mc(&self, input: &[f64], masks: &[DropoutMask]) -> Result<Vec<Vec<f64>>> {
        self.check_input(input)?;
        let Some(first) = self.hidden.first() else {
            let out = self.predict(input)?;
            return Ok(vec![out; masks.len()]);
        };
        let act = self.spec.activation;
        let activated: Vec<f64> = first
            .affine(&self.params, input)
            .into_iter()
            .map(|z| act.apply(z))
            .collect();
        let mut outputs = Vec::with_capacity(masks.len());
        for mask in masks {
            let mut h: Vec<f64> = activated
                .iter()
                .zip(&mask.layers[0])
                .map(|(a, m)| a * m)
                .collect();
            for (l, layer) in self.hidden.iter().enumerate().skip(1) {
                h = layer
                    .affine(&self.params, &h)
                    .into_iter()
                    .zip(&mask.layers[l])
                    .map(|(z, m)| act.apply(z) * m)
                    .collect();
            }
            outputs.push(self.head_output(&self.head_forward(&h)));
        }
        Ok(outputs)
    }

    /// Argmax of the eval-mode output, ties to the lowest index.
    pub fn greedy_action(&self, input: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict(input)?))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_dim {
            return Err(NnError::DimensionMismatch {
                expected: self.spec.input_dim,
                got: input.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn trace(&self, input: &[f64], mask: Option<&DropoutMask>) -> Result<Trace> {
        self.check_input(input)?;
        let act = self.spec.activation;
        let k = self.hidden.len();
        let mut inputs = Vec::with_capacity(k);
        let mut pre = Vec::with_capacity(k);
        let mut masks = Vec::with_capacity(k);
        let mut h = input.to_vec();
        for (l, layer) in self.hidden.iter().enumerate() {
            let z = layer.affine(&self.params, &h);
            let m = match mask {
                Some(mask) => mask.layers[l].clone(),
                None => vec![1.0; layer.outputs],
            };
            let next: Vec<f64> = z.iter().zip(&m).map(|(&z, &m)| act.apply(z) * m).collect();
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
            masks.push(m);
        }
        let head_raw = self.head_forward(&h);
        Ok(Trace {
            inputs,
            pre,
            masks,
            features: h,
            head_raw,
        })
    }

    fn head_forward(&self, features: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.output_dim + 1);
        for layer in &self.head {
            out.extend(layer.affine(&self.params, features));
        }
        out
    }

    pub(crate) fn head_output(&self, raw: &[f64]) -> Vec<f64> {
        match self.spec.head_kind {
            HeadKind::SoftmaxClassifier => softmax(raw),
            HeadKind::QDueling => dueling_combine(raw[0], &raw[1..]),
        }
    }

    pub(crate) fn backward(&self, trace: &Trace, head_grad: HeadGrad<'_>, grads: &mut [f64]) {
        let mut d_features = match head_grad {
            HeadGrad::Logits(dz) => self.head[0].backward(&self.params, &trace.features, dz, grads, true),
            HeadGrad::Q(dq) => {
                let n = dq.len() as f64;
                let dv = dq.iter().sum::<f64>();
                let mean = dv / n;
                let da: Vec<f64> = dq.iter().map(|g| g - mean).collect();
                let mut df = self.head[0].backward(&self.params, &trace.features, &[dv], grads, true);
                let df_adv = self.head[1].backward(&self.params, &trace.features, &da, grads, true);
                for (a, b) in df.iter_mut().zip(df_adv) {
                    *a += b;
                }
                df
            }
        };
        let act = self.spec.activation;
        for l in (0..self.hidden.len()).rev() {
            let d_pre: Vec<f64> = d_features
                .iter()
                .zip(&trace.masks[l])
                .zip(&trace.pre[l])
                .map(|((g, m), &z)| g * m * act.derivative(z))
                .collect();
            d_features = self.hidden[l].backward(&self.params, &trace.inputs[l], &d_pre, grads, l > 0);
        }
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a')`.
pub fn dueling_combine(value: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| value + a - mean).collect()
}
