//! Experiment plumbing: datasets, configuration, training and gradient checks.

pub mod config;
pub mod data;
pub mod experiments;
pub mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::dynamics::{relax, RelaxConfig, RelaxMode};
use crate::error::Result;
use crate::gradient::GradientBundle;
use crate::loss::Loss;
use crate::net::NetworkParams;
use crate::reference::{classical_backprop, finite_difference_grad};
use crate::scalar::Scalar;

pub use config::{ArchitectureConfig, ExperimentConfig, OptimizerConfig, Overrides, RelaxSettings};
pub use data::{generate_dataset, Dataset, DatasetKind, DatasetSpec};

/// Where a training or check run gets its gradients from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    Bp,
    #[default]
    Dyadic,
    MeanStress,
    TwoL,
    Split,
    FiniteDiff,
}

impl GradientMethod {
    pub const ALL: [GradientMethod; 6] = [
        GradientMethod::Bp,
        GradientMethod::Dyadic,
        GradientMethod::MeanStress,
        GradientMethod::TwoL,
        GradientMethod::Split,
        GradientMethod::FiniteDiff,
    ];

    pub fn relax_mode(self) -> Option<RelaxMode> {
        match self {
            GradientMethod::Dyadic => Some(RelaxMode::Dyadic),
            GradientMethod::MeanStress => Some(RelaxMode::MeanStress),
            GradientMethod::TwoL => Some(RelaxMode::TwoL),
            GradientMethod::Split => Some(RelaxMode::Split),
            GradientMethod::Bp | GradientMethod::FiniteDiff => None,
        }
    }

    /// Methods whose result depends on the Euler step size.
    pub fn uses_eta(self) -> bool {
        matches!(
            self,
            GradientMethod::Dyadic | GradientMethod::MeanStress | GradientMethod::Split
        )
    }
}

impl fmt::Display for GradientMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GradientMethod::Bp => "bp",
            GradientMethod::Dyadic => "dyadic",
            GradientMethod::MeanStress => "mean_stress",
            GradientMethod::TwoL => "two_l",
            GradientMethod::Split => "split",
            GradientMethod::FiniteDiff => "finite_diff",
        };
        f.write_str(s)
    }
}

impl FromStr for GradientMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bp" | "backprop" => Ok(GradientMethod::Bp),
            "finite_diff" | "finitediff" | "fd" => Ok(GradientMethod::FiniteDiff),
            other => other
                .parse::<RelaxMode>()
                .map(|m| match m {
                    RelaxMode::Dyadic => GradientMethod::Dyadic,
                    RelaxMode::MeanStress => GradientMethod::MeanStress,
                    RelaxMode::TwoL => GradientMethod::TwoL,
                    RelaxMode::Split => GradientMethod::Split,
                })
                .map_err(|_| format!("unknown gradient method `{s}`")),
        }
    }
}

/// Gradient for one `(input, target)` pair plus relaxation bookkeeping.
#[derive(Debug, Clone)]
pub struct SampleGradient<T> {
    pub gradient: GradientBundle<T>,
    /// `None` for methods without a relaxation loop.
    pub iterations: Option<usize>,
    pub converged: bool,
}

pub fn sample_gradient<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    method: GradientMethod,
    relax_cfg: &RelaxSettings,
    fd_step: f64,
) -> Result<SampleGradient<T>> {
    match method.relax_mode() {
        Some(mode) => {
            let cfg = relax_cfg.to_config(mode);
            let r = relax(params, input, loss, &cfg)?;
            Ok(SampleGradient {
                gradient: r.gradient,
                iterations: Some(r.trace.iterations_used),
                converged: r.trace.converged,
            })
        }
        None => {
            let gradient = match method {
                GradientMethod::FiniteDiff => {
                    finite_difference_grad(params, input, loss, T::of(fd_step))?
                }
                _ => classical_backprop(params, input, loss)?.gradient,
            };
            Ok(SampleGradient {
                gradient,
                iterations: None,
                converged: true,
            })
        }
    }
}

impl RelaxSettings {
    pub fn to_config(&self, mode: RelaxMode) -> RelaxConfig {
        RelaxConfig {
            eta: self.eta,
            k_max: self.k_max,
            tol: self.tol,
            mode,
        }
    }
}
