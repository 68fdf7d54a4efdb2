//! Dense multi-layer perceptron with hand-written backpropagation.
//!
//! Weights of each layer are stored row-major with shape `(outputs, inputs)`.
//! All arithmetic is `f64`. Hidden layers share one activation and the last
//! layer has its own, which is all the actor and critic networks need.

mod adam;
mod checkpoint;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("parameter shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("invalid network layout: {0}")]
    InvalidLayout(String),
    #[error("non-finite gradient at iteration {iteration}, layer {layer}, {kind} index {index}")]
    NonFiniteGradient {
        iteration: u64,
        layer: usize,
        kind: ParamKind,
        index: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Which parameter block of a layer an index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

impl std::fmt::Display for ParamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamKind::Weight => f.write_str("weight"),
            ParamKind::Bias => f.write_str("bias"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y = f(z)`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// One affine layer: `y = f(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Row-major `(outputs, inputs)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }
}

/// Cached per-layer outputs of a forward pass, reused by [`Mlp::backward_tape`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    layers: Vec<Layer>,
    hidden: Activation,
    output: Activation,
}

impl Mlp {
    /// All-zero network. Also used as the gradient container for a network of
    /// the same layout.
    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(NnError::InvalidLayout(format!(
                "need at least input and output dims, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(NnError::InvalidLayout(format!(
                "layer dims must be positive, got {dims:?}"
            )));
        }
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            hidden,
            output,
        })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims, hidden, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
            hidden: self.hidden,
            output: self.output,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("validated at construction")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.dims == other.dims
    }

    fn check_shape(&self, other: &Mlp, context: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(NnError::ShapeMismatch(format!(
                "{context}: {:?} vs {:?}",
                self.dims, other.dims
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::default();
        self.forward_tape(input, &mut tape)?;
        Ok(tape.acts.pop().unwrap_or_default())
    }

    /// Forward pass that records every layer output in `tape`.
    pub fn forward_tape<'t>(&self, input: &[f64], tape: &'t mut Tape) -> Result<&'t [f64]> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                context: "forward input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        tape.acts.resize_with(self.layers.len() + 1, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(l);
            let (prev, rest) = tape.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut rest[0];
            y.clear();
            y.extend(
                layer
                    .weights
                    .chunks_exact(layer.inputs)
                    .zip(&layer.biases)
                    .map(|(row, b)| act.apply(dot(row, x) + b)),
            );
        }
        Ok(tape.output())
    }

    /// Gradients of `output_grad · f(input)` with respect to parameters and input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Mlp, Vec<f64>)> {
        let mut tape = Tape::default();
        self.forward_tape(input, &mut tape)?;
        let mut grads = self.zeros_like();
        let mut input_grad = Vec::new();
        self.backward_tape(&mut tape, output_grad, Some(&mut grads), Some(&mut input_grad))?;
        Ok((grads, input_grad))
    }

    /// Backpropagates through a tape filled by [`Mlp::forward_tape`].
    ///
    /// Parameter gradients are *accumulated* into `grads` when given, so a
    /// mini-batch is a loop of forward/backward pairs into one container.
    pub fn backward_tape(
        &self,
        tape: &mut Tape,
        output_grad: &[f64],
        mut grads: Option<&mut Mlp>,
        input_grad: Option<&mut Vec<f64>>,
    ) -> Result<()> {
        if output_grad.len() != self.output_dim() {
            return Err(NnError::DimensionMismatch {
                context: "backward output gradient",
                expected: self.output_dim(),
                actual: output_grad.len(),
            });
        }
        if tape.acts.len() != self.layers.len() + 1 || tape.acts[0].len() != self.input_dim() {
            return Err(NnError::ShapeMismatch(
                "tape was not produced by this network".into(),
            ));
        }
        if let Some(g) = grads.as_deref() {
            self.check_shape(g, "gradient accumulator")?;
        }
        let want_input_grad = input_grad.is_some();
        let Tape {
            acts,
            delta,
            delta_next,
        } = tape;
        delta.clear();
        delta.extend_from_slice(output_grad);

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let act = self.activation_of(l);
            for (d, &y) in delta.iter_mut().zip(&acts[l + 1]) {
                *d *= act.derivative_from_output(y);
            }
            let x = &acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[l];
                for ((grow, &d), gb) in gl
                    .weights
                    .chunks_exact_mut(layer.inputs)
                    .zip(delta.iter())
                    .zip(gl.biases.iter_mut())
                {
                    if d != 0.0 {
                        axpy(d, x, grow);
                    }
                    *gb += d;
                }
            }
            if l > 0 || want_input_grad {
                delta_next.clear();
                delta_next.resize(layer.inputs, 0.0);
                for (row, &d) in layer.weights.chunks_exact(layer.inputs).zip(delta.iter()) {
                    if d != 0.0 {
                        axpy(d, row, delta_next);
                    }
                }
                std::mem::swap(delta, delta_next);
            }
        }
        if let Some(ig) = input_grad {
            ig.clear();
            ig.extend_from_slice(delta);
        }
        Ok(())
    }

    /// `self ← tau·online + (1 − tau)·self`, component-wise.
    pub fn polyak_blend(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        self.check_shape(online, "polyak blend")?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(NnError::InvalidLayout(format!("tau {tau} outside [0, 1]")));
        }
        let keep = 1.0 - tau;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (tv, ov) in t
                .weights
                .iter_mut()
                .chain(t.biases.iter_mut())
                .zip(o.weights.iter().chain(&o.biases))
            {
                *tv = tau * ov + keep * *tv;
            }
        }
        Ok(())
    }

    /// Sets every parameter to zero, keeping the layout.
    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    /// Multiplies every parameter by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .chain(l.biases.iter_mut())
                .for_each(|v| *v *= factor);
        }
    }

    /// Flat parameter view in checkpoint order: all weights, then all biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
        }
        for l in &self.layers {
            out.extend_from_slice(&l.biases);
        }
        out
    }
}

/// Standalone functional form of [`Mlp::polyak_blend`].
pub fn polyak_blend(target: &Mlp, online: &Mlp, tau: f64) -> Result<Mlp> {
    let mut out = target.clone();
    out.polyak_blend(online, tau)?;
    Ok(out)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators so the loop vectorises without fast-math.
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
