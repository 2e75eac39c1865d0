//! Doubled-state saddle dynamics and their Euler relaxations.
//!
//! The backward state `x` ascends the energy and the forward state `z`
//! descends it. The mean `m = (x + z) / 2` relaxes to the forward pass and
//! the stress `s = x - z` relaxes to the stacked activation sensitivities,
//! from which the usual outer-product gradients are read off.

mod extract;
mod field;
mod relax;
mod stability;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::GradientBundle;
use crate::net::GlobalVector;
use crate::scalar::Scalar;

pub use extract::gradient_from_equilibrium;
pub use field::{energy, mean_stress_velocities, saddle_velocities, split_velocities};
pub use relax::{
    dyadic_iterates, mean_stress_iterates, relax, relax_dyadic, relax_mean_stress, relax_split,
    relax_two_l, split_iterates, two_l_iterates, TwoLResult,
};
pub use stability::{stability_check, stability_check_with, StabilityReport};
pub use trajectory::write_trajectory_csv;

/// Conjugate pair of stacked states. Mean and stress are derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadState<T> {
    /// Backward state.
    pub x: GlobalVector<T>,
    /// Forward state.
    pub z: GlobalVector<T>,
}

impl<T: Scalar> DyadState<T> {
    pub fn new(x: GlobalVector<T>, z: GlobalVector<T>) -> Result<Self> {
        if !x.same_layout(&z) {
            return Err(Error::Shape {
                context: "DyadState",
                expected: x.len(),
                actual: z.len(),
            });
        }
        Ok(Self { x, z })
    }

    /// Both states equal to `v`.
    pub fn symmetric(v: GlobalVector<T>) -> Self {
        Self { x: v.clone(), z: v }
    }

    /// `x = m + s/2`, `z = m - s/2`.
    pub fn from_mean_stress(m: &GlobalVector<T>, s: &GlobalVector<T>) -> Self {
        let half = s.scaled(T::half());
        Self {
            x: m.add(&half),
            z: m.sub(&half),
        }
    }

    pub fn mean(&self) -> GlobalVector<T> {
        self.x.zip_map(&self.z, |a, b| T::half() * (a + b))
    }

    pub fn stress(&self) -> GlobalVector<T> {
        self.x.sub(&self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelaxMode {
    /// Joint Euler relaxation of `(x, z)` with midpoint-evaluated forces.
    #[default]
    Dyadic,
    /// Euler relaxation of the equivalent `(m, s)` system.
    MeanStress,
    /// Exactly `2L` unit steps of the `(m, s)` maps.
    TwoL,
    /// `(x, z)` relaxation with drives and Jacobians evaluated per state.
    Split,
}

impl fmt::Display for RelaxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RelaxMode::Dyadic => "dyadic",
            RelaxMode::MeanStress => "mean_stress",
            RelaxMode::TwoL => "two_l",
            RelaxMode::Split => "split",
        };
        f.write_str(s)
    }
}

impl FromStr for RelaxMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dyadic" | "dbp" => Ok(RelaxMode::Dyadic),
            "mean_stress" | "meanstress" | "ms" => Ok(RelaxMode::MeanStress),
            "two_l" | "twol" | "2l" => Ok(RelaxMode::TwoL),
            "split" => Ok(RelaxMode::Split),
            other => Err(format!("unknown relaxation mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxConfig {
    /// Euler step size.
    pub eta: f64,
    pub k_max: usize,
    /// Stop once the summed L2 step norms drop below this.
    pub tol: f64,
    pub mode: RelaxMode,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            k_max: 1000,
            tol: 1e-6,
            mode: RelaxMode::Dyadic,
        }
    }
}

impl RelaxConfig {
    pub fn new(mode: RelaxMode, eta: f64) -> Self {
        Self {
            mode,
            eta,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("step size must be positive, got {}", self.eta)));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.eta > 1.0 {
            log::warn!("step size {} exceeds 1; Euler relaxation may oscillate", self.eta);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    /// Zero-based iteration index.
    pub k: usize,
    /// Summed L2 norms of the two state increments of this step.
    pub delta: f64,
    /// Energy of the state this step departed from.
    pub energy: f64,
    /// Per-layer stress norms after the step.
    pub stress_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxTrace {
    pub mode: RelaxMode,
    pub iterations_used: usize,
    pub converged: bool,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct Relaxation<T> {
    pub mean: GlobalVector<T>,
    pub stress: GlobalVector<T>,
    pub gradient: GradientBundle<T>,
    pub trace: RelaxTrace,
}
