//! Fully connected classifier with softmax output and hand-derived backprop.
//!
//! Parameters live in one flat `Vec<f64>`: for each layer the `fan_in × fan_out`
//! weight matrix (row-major, row = input unit) followed by the `fan_out` biases.
//! Gradients use the same type and layout, so elementwise optimizer state can be
//! kept as plain slices.

mod backprop;
mod train;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub use backprop::{forward, forward_batch, loss, loss_and_grad, loss_and_grad_tapped, predict, Sample};
pub use train::{
    full_gradient_train, full_gradient_train_with, record_weight_gradient, tracked_gradients,
    GradMatrix, GradRecord, TrackedWeight,
};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    pub(crate) fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::InvalidArgument(format!("unknown activation `{s}`"))),
        }
    }
}

/// Layer sizes from input to output; the last size is the number of classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    sizes: Vec<usize>,
}

impl MlpShape {
    pub const REFERENCE: [usize; 5] = [784, 500, 500, 200, 10];
    pub const DESK: [usize; 5] = [784, 50, 50, 20, 10];

    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!(
                "layer sizes must have length >= 2 and be positive, got {sizes:?}"
            )));
        }
        if sizes.iter().any(|&s| s > u32::MAX as usize) {
            return Err(Error::Shape("layer size exceeds u32".into()));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

impl FromStr for MlpShape {
    type Err = Error;

    /// Comma-separated sizes, e.g. `784,50,50,20,10`.
    fn from_str(s: &str) -> Result<Self> {
        let sizes = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidArgument(format!("bad layer size `{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        MlpShape::new(sizes)
    }
}

impl fmt::Display for MlpShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    w_start: usize,
    b_start: usize,
}

/// Network parameters (or a gradient with the same layout).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    shape: MlpShape,
    activation: Activation,
    data: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(shape: &MlpShape, activation: Activation) -> Self {
        Self {
            shape: shape.clone(),
            activation,
            data: vec![0.0; shape.n_params()],
        }
    }

    pub fn zeros_like(other: &MlpParams) -> Self {
        Self::zeros(&other.shape, other.activation)
    }

    pub fn from_flat(shape: &MlpShape, activation: Activation, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                data.len(),
                shape.n_params()
            )));
        }
        Ok(Self {
            shape: shape.clone(),
            activation,
            data,
        })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    fn span(&self, layer: usize) -> LayerSpan {
        let mut off = 0;
        for (l, w) in self.shape.sizes.windows(2).enumerate() {
            let (fi, fo) = (w[0], w[1]);
            if l == layer {
                return LayerSpan {
                    fan_in: fi,
                    fan_out: fo,
                    w_start: off,
                    b_start: off + fi * fo,
                };
            }
            off += fi * fo + fo;
        }
        panic!("layer {layer} out of range");
    }

    /// Row-major `fan_in × fan_out` weights of `layer`.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let s = self.span(layer);
        &self.data[s.w_start..s.b_start]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.span(layer);
        &mut self.data[s.w_start..s.b_start]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let s = self.span(layer);
        &self.data[s.b_start..s.b_start + s.fan_out]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.span(layer);
        &mut self.data[s.b_start..s.b_start + s.fan_out]
    }

    /// Flat index of weight `(layer, out, in)`.
    pub fn weight_index(&self, layer: usize, out: usize, input: usize) -> Result<usize> {
        if layer >= self.shape.n_layers() {
            return Err(Error::InvalidArgument(format!("no layer {layer}")));
        }
        let s = self.span(layer);
        if out >= s.fan_out || input >= s.fan_in {
            return Err(Error::InvalidArgument(format!(
                "weight ({out}, {input}) outside layer {layer} of {}x{}",
                s.fan_in, s.fan_out
            )));
        }
        Ok(s.w_start + input * s.fan_out + out)
    }

    /// Mask with 1.0 on weight entries and 0.0 on biases.
    pub fn weight_mask(&self) -> Vec<f64> {
        let mut mask = vec![0.0; self.data.len()];
        for l in 0..self.shape.n_layers() {
            let s = self.span(l);
            mask[s.w_start..s.b_start].fill(1.0);
        }
        mask
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &MlpParams) {
        assert_eq!(self.data.len(), other.data.len(), "parameter layout mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        (0..self.shape.n_layers())
            .map(|l| self.weights(l).iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// Binary form: `MLP1`, u32 LE layer count, u32 LE sizes, then f64 LE values in
    /// layout order (per layer: weights row-major, then biases).
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.shape.sizes();
        let mut out = Vec::with_capacity(8 + 4 * sizes.len() + 8 * self.data.len());
        out.extend_from_slice(b"MLP1");
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for &s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], activation: Activation) -> Result<Self> {
        let take = |off: usize, n: usize| -> Result<&[u8]> {
            bytes.get(off..off + n).ok_or_else(|| {
                Error::Shape(format!("parameter blob truncated at offset {off}"))
            })
        };
        if take(0, 4)? != b"MLP1" {
            return Err(Error::Shape("parameter blob does not start with MLP1".into()));
        }
        let u32_at = |off: usize| -> Result<usize> {
            Ok(u32::from_le_bytes(take(off, 4)?.try_into().unwrap()) as usize)
        };
        let count = u32_at(4)?;
        let sizes = (0..count)
            .map(|i| u32_at(8 + 4 * i))
            .collect::<Result<Vec<_>>>()?;
        let shape = MlpShape::new(sizes)?;
        let start = 8 + 4 * count;
        let n = shape.n_params();
        let body = take(start, 8 * n)?;
        if bytes.len() != start + 8 * n {
            return Err(Error::Shape("trailing bytes after parameter blob".into()));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(&shape, activation, data)
    }
}

/// Standard deviation of initial weights for a layer with `fan_in` inputs.
pub fn init_std(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

/// Weights `N(0, 1/fan_in)`, biases zero.
pub fn init_params(shape: &MlpShape, activation: Activation, seed: u64) -> MlpParams {
    let mut params = MlpParams::zeros(shape, activation);
    for l in 0..shape.n_layers() {
        let fan_in = shape.sizes()[l];
        let dist = Normal::new(0.0, init_std(fan_in)).expect("positive std");
        let mut rng = rng::stream(seed, &[tag::INIT_PARAMS, l as u64]);
        for w in params.weights_mut(l) {
            *w = dist.sample(&mut rng);
        }
    }
    params
}
