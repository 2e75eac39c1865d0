use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::net::{GlobalVector, NetworkParams};
use crate::scalar::Scalar;

/// Per-layer weight and bias gradients, shape-conformal to a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> GradientBundle<T> {
    pub fn zeros_like(params: &NetworkParams<T>) -> Self {
        Self {
            weights: params.layers().iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            biases: params.layers().iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    /// Assembles `grad W_l = delta_l * pre_{l-1}^T`, `grad b_l = delta_l`, where
    /// `pre_0` is the network input and `pre_l` is block `l` of `presynaptic`.
    pub fn from_outer_products(
        params: &NetworkParams<T>,
        input: ArrayView1<'_, T>,
        presynaptic: &GlobalVector<T>,
        deltas: &GlobalVector<T>,
    ) -> Result<Self> {
        params.check_input(input)?;
        params.check_state(presynaptic)?;
        params.check_state(deltas)?;
        let mut weights = Vec::with_capacity(params.num_layers());
        let mut biases = Vec::with_capacity(params.num_layers());
        for l in 0..params.num_layers() {
            let delta = deltas.block(l);
            let pre = if l == 0 { input } else { presynaptic.block(l - 1) };
            weights.push(outer(delta, pre));
            biases.push(delta.to_owned());
        }
        Ok(Self { weights, biases })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn conforms_to(&self, params: &NetworkParams<T>) -> bool {
        self.weights.len() == params.num_layers()
            && self.biases.len() == params.num_layers()
            && params.layers().iter().enumerate().all(|(l, layer)| {
                self.weights[l].dim() == layer.weights.dim()
                    && self.biases[l].len() == layer.bias.len()
            })
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.dim() == b.dim())
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.len() == b.len())
    }

    /// All entries of layer `l` (weights row-major, then bias).
    pub fn layer_values(&self, l: usize) -> impl Iterator<Item = T> + '_ {
        self.weights[l].iter().chain(self.biases[l].iter()).copied()
    }

    /// Every entry in layer order.
    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.num_layers()).flat_map(move |l| self.layer_values(l))
    }

    pub fn norm(&self) -> T {
        self.values().fold(T::zero(), |acc, v| acc + v * v).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, alpha: T) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * alpha);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * alpha);
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape {
                context: "GradientBundle::add_assign",
                expected: self.values().count(),
                actual: other.values().count(),
            });
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
        Ok(())
    }

    /// Sums bundles in iteration order and divides by the count.
    pub fn mean<'a, I>(params: &NetworkParams<T>, bundles: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Self>,
        T: 'a,
    {
        let mut acc = Self::zeros_like(params);
        let mut count = 0usize;
        for b in bundles {
            acc.add_assign(b)?;
            count += 1;
        }
        if count > 0 {
            acc.scale(T::one() / T::of(count as f64));
        }
        Ok(acc)
    }

    /// Relative Frobenius distance `||self - reference|| / ||reference||`.
    pub fn relative_error(&self, reference: &Self) -> f64 {
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (a, b) in self.values().zip(reference.values()) {
            let (a, b) = (a.as_f64(), b.as_f64());
            diff += (a - b) * (a - b);
            norm += b * b;
        }
        if norm == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (diff / norm).sqrt()
        }
    }

    pub fn cast<U: Scalar>(&self) -> GradientBundle<U> {
        GradientBundle {
            weights: self.weights.iter().map(|w| w.mapv(|v| U::of(v.as_f64()))).collect(),
            biases: self.biases.iter().map(|b| b.mapv(|v| U::of(v.as_f64()))).collect(),
        }
    }
}

fn outer<T: Scalar>(col: ArrayView1<'_, T>, row: ArrayView1<'_, T>) -> Array2<T> {
    let c = col.insert_axis(Axis(1));
    let r = row.insert_axis(Axis(0));
    &c * &r
}
