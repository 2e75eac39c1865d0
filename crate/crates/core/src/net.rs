//! Feedforward chain networks and their global block-triangular operator.
//!
//! All layer activations are stacked into one [`GlobalVector`] of length
//! `n = n_1 + ... + n_L`. The global weight operator maps block `l - 1` to
//! block `l` through `W_l` and leaves block 1 empty, so it is strictly lower
//! block-triangular. It is only ever applied through per-layer matvecs.
//!
//! Layer indices in this module are zero-based: index `0` is the first hidden
//! layer and index `L - 1` the output layer. The network input is not part of
//! the stacked state.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Relu,
    ];

    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Exact elementwise derivative. ReLU uses `0` at the kink.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Sigmoid => {
                let y = self.apply(x);
                y * (T::one() - y)
            }
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        };
        f.write_str(name)
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" | "logistic" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self { width, activation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    /// Shape `width x fan_in`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// Block layout of a stacked state: `offsets[l]..offsets[l + 1]` is block `l`.
pub type Layout = Arc<[usize]>;

fn layout_of(specs: impl Iterator<Item = usize>) -> Layout {
    let mut offsets = vec![0];
    let mut acc = 0;
    for w in specs {
        acc += w;
        offsets.push(acc);
    }
    offsets.into()
}

/// A stacked per-layer state (activations, mean, stress, drives, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalVector<T> {
    data: Array1<T>,
    offsets: Layout,
}

impl<T: Scalar> GlobalVector<T> {
    pub fn zeros(offsets: Layout) -> Self {
        let n = *offsets.last().unwrap_or(&0);
        Self {
            data: Array1::zeros(n),
            offsets,
        }
    }

    pub fn from_data(offsets: Layout, data: Array1<T>) -> Result<Self> {
        check_len("GlobalVector::from_data", *offsets.last().unwrap_or(&0), data.len())?;
        Ok(Self { data, offsets })
    }

    pub fn from_blocks<'a, I>(offsets: Layout, blocks: I) -> Result<Self>
    where
        I: IntoIterator<Item = ArrayView1<'a, T>>,
    {
        let mut out = Self::zeros(offsets);
        let mut count = 0;
        for (l, b) in blocks.into_iter().enumerate() {
            if l >= out.num_blocks() {
                return Err(Error::Shape {
                    context: "GlobalVector::from_blocks",
                    expected: out.num_blocks(),
                    actual: l + 1,
                });
            }
            check_len("GlobalVector::from_blocks", out.block_len(l), b.len())?;
            out.block_mut(l).assign(&b);
            count += 1;
        }
        check_len("GlobalVector::from_blocks", out.num_blocks(), count)?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn offsets(&self) -> &Layout {
        &self.offsets
    }

    pub fn block_len(&self, l: usize) -> usize {
        self.offsets[l + 1] - self.offsets[l]
    }

    pub fn block(&self, l: usize) -> ArrayView1<'_, T> {
        self.data.slice(s![self.offsets[l]..self.offsets[l + 1]])
    }

    pub fn block_mut(&mut self, l: usize) -> ArrayViewMut1<'_, T> {
        self.data.slice_mut(s![self.offsets[l]..self.offsets[l + 1]])
    }

    pub fn blocks(&self) -> impl Iterator<Item = ArrayView1<'_, T>> + '_ {
        (0..self.num_blocks()).map(move |l| self.block(l))
    }

    pub fn data(&self) -> &Array1<T> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array1<T> {
        &mut self.data
    }

    pub fn into_data(self) -> Array1<T> {
        self.data
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.offsets == other.offsets
    }

    pub fn dot(&self, other: &Self) -> T {
        self.data.dot(&other.data)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn block_norms(&self) -> Vec<T> {
        self.blocks().map(|b| b.dot(&b).sqrt()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.mapv(f),
            offsets: self.offsets.clone(),
        }
    }

    /// Elementwise combination of two conforming vectors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_layout(other));
        let mut data = self.data.clone();
        Zip::from(&mut data).and(&other.data).for_each(|a, &b| *a = f(*a, b));
        Self {
            data,
            offsets: self.offsets.clone(),
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        self.map(|v| v * alpha)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// Euclidean distance `||self - other||`.
    pub fn distance(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn cast<U: Scalar>(&self) -> GlobalVector<U> {
        GlobalVector {
            data: self.data.mapv(|v| U::of(v.as_f64())),
            offsets: self.offsets.clone(),
        }
    }
}

/// Result of a plain forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub pre_activations: Vec<Array1<T>>,
    pub activations: Vec<Array1<T>>,
    pub stacked: GlobalVector<T>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn output(&self) -> ArrayView1<'_, T> {
        self.activations.last().expect("at least one layer").view()
    }
}

/// Parameter set of an `L`-layer chain network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    input_dim: usize,
    layers: Vec<Layer<T>>,
    layout: Layout,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn new(input_dim: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidNetwork("input dimension must be >= 1".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network needs at least one layer".into()));
        }
        let mut fan_in = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            let width = layer.spec.width;
            if width == 0 {
                return Err(Error::InvalidNetwork(format!("layer {} has zero width", l + 1)));
            }
            if layer.weights.dim() != (width, fan_in) {
                return Err(Error::InvalidNetwork(format!(
                    "layer {} weights have shape {:?}, expected ({width}, {fan_in})",
                    l + 1,
                    layer.weights.dim()
                )));
            }
            check_len("layer bias", width, layer.bias.len())?;
            if !layer.weights.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite("network parameters"));
            }
            fan_in = width;
        }
        let layout = layout_of(layers.iter().map(|l| l.spec.width));
        Ok(Self {
            input_dim,
            layers,
            layout,
        })
    }

    /// Zero-mean Gaussian weights with standard deviation `1/sqrt(fan_in)`.
    /// Biases are Gaussian with standard deviation `bias_std` (zero gives zero biases).
    pub fn init_gaussian<R: Rng + ?Sized>(
        input_dim: usize,
        specs: &[LayerSpec],
        bias_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut fan_in = input_dim;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let std = 1.0 / (fan_in.max(1) as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((spec.width, fan_in), || {
                T::of(std * rng.sample::<f64, _>(StandardNormal))
            });
            let bias = Array1::from_shape_simple_fn(spec.width, || {
                T::of(bias_std * rng.sample::<f64, _>(StandardNormal))
            });
            layers.push(Layer {
                spec: *spec,
                weights,
                bias,
            });
            fan_in = spec.width;
        }
        Self::new(input_dim, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &Layer<T> {
        &self.layers[l]
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.spec.width).unwrap_or(0)
    }

    /// Total stacked state size `n`.
    pub fn state_dim(&self) -> usize {
        *self.layout.last().unwrap()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn zeros(&self) -> GlobalVector<T> {
        GlobalVector::zeros(self.layout.clone())
    }

    pub fn weights_mut(&mut self, l: usize) -> ArrayViewMut2<'_, T> {
        self.layers[l].weights.view_mut()
    }

    pub fn bias_mut(&mut self, l: usize) -> ArrayViewMut1<'_, T> {
        self.layers[l].bias.view_mut()
    }

    pub fn weights(&self, l: usize) -> ArrayView2<'_, T> {
        self.layers[l].weights.view()
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    weights: l.weights.mapv(|v| U::of(v.as_f64())),
                    bias: l.bias.mapv(|v| U::of(v.as_f64())),
                })
                .collect(),
            layout: self.layout.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub(crate) fn check_input(&self, input: ArrayView1<'_, T>) -> Result<()> {
        check_len("network input", self.input_dim, input.len())?;
        if input.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("network input"))
        }
    }

    pub(crate) fn check_state(&self, v: &GlobalVector<T>) -> Result<()> {
        if v.offsets() == &self.layout {
            Ok(())
        } else {
            Err(Error::Shape {
                context: "global state layout",
                expected: self.state_dim(),
                actual: v.len(),
            })
        }
    }

    /// Standard layer-by-layer forward pass.
    pub fn forward_pass(&self, input: ArrayView1<'_, T>) -> Result<ForwardPass<T>> {
        self.check_input(input)?;
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Array1<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = activations.last().map(|a| a.view()).unwrap_or(input);
            let z = layer.weights.dot(&prev) + &layer.bias;
            let act = layer.spec.activation;
            let a = z.mapv(|v| act.apply(v));
            pre_activations.push(z);
            activations.push(a);
        }
        let stacked =
            GlobalVector::from_blocks(self.layout.clone(), activations.iter().map(|a| a.view()))?;
        Ok(ForwardPass {
            pre_activations,
            activations,
            stacked,
        })
    }

    /// Input and bias drives: block 1 is `W_1 x_0 + b_1`, block `l > 1` is `b_l`.
    pub fn beta_drive(&self, input: ArrayView1<'_, T>) -> Result<GlobalVector<T>> {
        self.check_input(input)?;
        let mut beta = self.zeros();
        for (l, layer) in self.layers.iter().enumerate() {
            if l == 0 {
                let v = layer.weights.dot(&input) + &layer.bias;
                beta.block_mut(0).assign(&v);
            } else {
                beta.block_mut(l).assign(&layer.bias);
            }
        }
        Ok(beta)
    }

    /// Action of the global weight operator: block 1 is zero, block `l` is `W_l v_{l-1}`.
    pub fn apply_global_w(&self, v: &GlobalVector<T>) -> Result<GlobalVector<T>> {
        self.check_state(v)?;
        let mut out = self.zeros();
        for l in 1..self.layers.len() {
            let y = self.layers[l].weights.dot(&v.block(l - 1));
            out.block_mut(l).assign(&y);
        }
        Ok(out)
    }

    /// Action of the transposed operator: block `L` is zero, block `l` is `W_{l+1}^T v_{l+1}`.
    pub fn apply_global_wt(&self, v: &GlobalVector<T>) -> Result<GlobalVector<T>> {
        self.check_state(v)?;
        let mut out = self.zeros();
        for l in 1..self.layers.len() {
            let y = self.layers[l].weights.t().dot(&v.block(l));
            out.block_mut(l - 1).assign(&y);
        }
        Ok(out)
    }

    /// `W a + beta`, computed block by block.
    pub fn pre_activation(
        &self,
        beta: &GlobalVector<T>,
        a: &GlobalVector<T>,
    ) -> Result<GlobalVector<T>> {
        self.check_state(beta)?;
        self.check_state(a)?;
        let mut out = beta.clone();
        for l in 1..self.layers.len() {
            let y = self.layers[l].weights.dot(&a.block(l - 1));
            let mut blk = out.block_mut(l);
            blk += &y;
        }
        Ok(out)
    }

    /// Applies each layer's activation to its block.
    pub fn activate(&self, pre: &GlobalVector<T>) -> GlobalVector<T> {
        let mut out = pre.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let act = layer.spec.activation;
            out.block_mut(l).mapv_inplace(|v| act.apply(v));
        }
        out
    }

    /// Applies each layer's activation derivative to its block.
    pub fn activate_derivative(&self, pre: &GlobalVector<T>) -> GlobalVector<T> {
        let mut out = pre.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let act = layer.spec.activation;
            out.block_mut(l).mapv_inplace(|v| act.derivative(v));
        }
        out
    }

    /// Forward vector field `F(a) = sigma(W a + beta) - a`.
    pub fn forward_field(
        &self,
        input: ArrayView1<'_, T>,
        a: &GlobalVector<T>,
    ) -> Result<GlobalVector<T>> {
        let beta = self.beta_drive(input)?;
        let pre = self.pre_activation(&beta, a)?;
        Ok(self.activate(&pre).sub(a))
    }

    /// Diagonal of `D(m) = diag(sigma'(W m + beta))`.
    pub fn local_derivative_diag(
        &self,
        input: ArrayView1<'_, T>,
        m: &GlobalVector<T>,
    ) -> Result<GlobalVector<T>> {
        let beta = self.beta_drive(input)?;
        let pre = self.pre_activation(&beta, m)?;
        Ok(self.activate_derivative(&pre))
    }
}
