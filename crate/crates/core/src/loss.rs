//! Supervised losses on the network output block.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::net::GlobalVector;
use crate::scalar::Scalar;

/// A differentiable cost `C(a_L, y)` on the output activations.
pub trait Loss<T: Scalar>: Sync {
    fn output_dim(&self) -> usize;

    fn value(&self, output: ArrayView1<'_, T>) -> T;

    /// `grad_{a_L} C`.
    fn gradient(&self, output: ArrayView1<'_, T>) -> Array1<T>;

    /// Loss gradient placed on the output block of a stacked state, zero elsewhere.
    fn embedded_gradient(&self, state: &GlobalVector<T>) -> GlobalVector<T> {
        let last = state.num_blocks() - 1;
        let mut g = GlobalVector::zeros(state.offsets().clone());
        g.block_mut(last).assign(&self.gradient(state.block(last)));
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `0.5 * ||a_L - y||^2`
    Mse,
    /// Softmax folded into the loss; `a_L` holds logits.
    #[default]
    SoftmaxCrossEntropy,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Mse => f.write_str("mse"),
            LossKind::SoftmaxCrossEntropy => f.write_str("softmax_cross_entropy"),
        }
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "ce" | "xent" | "softmax_ce" | "softmax_cross_entropy" | "cross_entropy" => {
                Ok(LossKind::SoftmaxCrossEntropy)
            }
            other => Err(format!("unknown loss `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec<T> {
    pub kind: LossKind,
    pub target: Array1<T>,
}

impl<T: Scalar> LossSpec<T> {
    pub fn new(kind: LossKind, target: Array1<T>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Config("loss target is empty".into()));
        }
        if !target.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("loss target"));
        }
        if kind == LossKind::SoftmaxCrossEntropy {
            let sum = target.iter().fold(0.0, |acc, v| acc + v.as_f64());
            if target.iter().any(|&v| v < T::zero()) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Config(
                    "cross-entropy target must be a probability vector".into(),
                ));
            }
        }
        Ok(Self { kind, target })
    }

    pub fn mse(target: Array1<T>) -> Result<Self> {
        Self::new(LossKind::Mse, target)
    }

    pub fn cross_entropy(target: Array1<T>) -> Result<Self> {
        Self::new(LossKind::SoftmaxCrossEntropy, target)
    }

    pub fn check_output(&self, output: ArrayView1<'_, T>) -> Result<()> {
        check_len("loss output", self.target.len(), output.len())
    }
}

pub fn softmax<T: Scalar>(logits: ArrayView1<'_, T>) -> Array1<T> {
    let max = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e = logits.mapv(|v| (v - max).exp());
    let z = e.sum();
    e / z
}

fn log_sum_exp<T: Scalar>(logits: ArrayView1<'_, T>) -> T {
    let max = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    max + logits.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp()).ln()
}

impl<T: Scalar> Loss<T> for LossSpec<T> {
    fn output_dim(&self) -> usize {
        self.target.len()
    }

    fn value(&self, output: ArrayView1<'_, T>) -> T {
        match self.kind {
            LossKind::Mse => {
                let d = &output - &self.target;
                T::half() * d.dot(&d)
            }
            LossKind::SoftmaxCrossEntropy => {
                let lse = log_sum_exp(output);
                // -sum_i y_i (a_i - lse), with sum_i y_i = 1
                self.target
                    .iter()
                    .zip(output.iter())
                    .fold(T::zero(), |acc, (&y, &a)| acc - y * (a - lse))
            }
        }
    }

    fn gradient(&self, output: ArrayView1<'_, T>) -> Array1<T> {
        match self.kind {
            LossKind::Mse => &output - &self.target,
            LossKind::SoftmaxCrossEntropy => softmax(output) - &self.target,
        }
    }
}
