//! TOML experiment configuration with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::csvout::Provenance;
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossSpec};
use crate::net::{Activation, LayerSpec};
use crate::scalar::{Precision, Scalar};

use super::data::DatasetSpec;
use super::GradientMethod;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    /// Hidden layer widths; the output layer is appended.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_activation: Activation,
    /// Defaults to the dataset feature count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    /// Defaults to the dataset class count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dim: Option<usize>,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32; 8],
            activation: Activation::Tanh,
            output_activation: Activation::Identity,
            input_dim: None,
            output_dim: None,
        }
    }
}

impl ArchitectureConfig {
    pub fn mlp(hidden: Vec<usize>, activation: Activation) -> Self {
        Self {
            hidden,
            activation,
            ..Self::default()
        }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn layer_specs(&self, output_dim: usize) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = self
            .hidden
            .iter()
            .map(|&w| LayerSpec::new(w, self.activation))
            .collect();
        specs.push(LayerSpec::new(output_dim, self.output_activation));
        specs
    }
}

/// Euler step, iteration cap and stopping tolerance; the mode follows the method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxSettings {
    pub eta: f64,
    pub k_max: usize,
    pub tol: f64,
}

impl Default for RelaxSettings {
    fn default() -> Self {
        let d = crate::dynamics::RelaxConfig::default();
        Self {
            eta: d.eta,
            k_max: d.k_max,
            tol: d.tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Cosine schedule start and end at the reference batch size.
    pub lr_max: f64,
    pub lr_min: f64,
    /// Learning rates scale by `batch_size / reference_batch`.
    pub reference_batch: usize,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr_max: 0.035,
            lr_min: 0.0002,
            reference_batch: 64,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 5e-4,
            epochs: 100,
            batch_size: 64,
        }
    }
}

impl OptimizerConfig {
    /// Learning rate used throughout epoch `epoch` (0-based) of `epochs`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let scale = self.batch_size as f64 / self.reference_batch as f64;
        let (hi, lo) = (self.lr_max * scale, self.lr_min * scale);
        if self.epochs <= 1 {
            return hi;
        }
        let t = epoch as f64 / self.epochs as f64;
        lo + 0.5 * (hi - lo) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub precision: Precision,
    pub method: GradientMethod,
    pub loss: LossKind,
    /// Directory receiving every CSV artifact.
    pub output: PathBuf,
    /// Treat relaxation non-convergence as a failure.
    pub strict: bool,
    /// Central-difference step for the finite-difference method.
    pub fd_step: f64,
    /// Random instances for `check` and `sweep`.
    pub trials: usize,
    /// Step sizes visited by `sweep`.
    pub etas: Vec<f64>,
    /// Standard deviation of the initial biases.
    pub bias_init_std: f64,
    pub architecture: ArchitectureConfig,
    pub relax: RelaxSettings,
    pub optimizer: OptimizerConfig,
    pub dataset: DatasetSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F64,
            method: GradientMethod::Dyadic,
            loss: LossKind::SoftmaxCrossEntropy,
            output: PathBuf::from("runs"),
            strict: false,
            fd_step: 1e-5,
            trials: 100,
            etas: vec![0.25, 0.5, 0.75, 1.0],
            bias_init_std: 0.0,
            architecture: ArchitectureConfig::default(),
            relax: RelaxSettings::default(),
            optimizer: OptimizerConfig::default(),
            dataset: DatasetSpec::default(),
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub eta: Option<f64>,
    pub k_max: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub method: Option<GradientMethod>,
    pub precision: Option<Precision>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Relative dataset paths are resolved against the config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(p), Some(dir)) = (cfg.dataset.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.eta {
            self.relax.eta = v;
        }
        if let Some(v) = o.k_max {
            self.relax.k_max = v;
        }
        if let Some(v) = o.tol {
            self.relax.tol = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.method {
            self.method = v;
        }
        if let Some(v) = o.precision {
            self.precision = v;
        }
        if let Some(v) = &o.output {
            self.output = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.relax.to_config(Default::default()).validate()?;
        if self.architecture.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if matches!(self.architecture.input_dim, Some(0)) || matches!(self.architecture.output_dim, Some(0)) {
            return Err(Error::Config("input/output dimensions must be positive".into()));
        }
        let o = &self.optimizer;
        if o.batch_size == 0 || o.reference_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(o.lr_max >= 0.0 && o.lr_min >= 0.0) || !(0.0..1.0).contains(&o.momentum) {
            return Err(Error::Config("learning rates must be >= 0 and momentum in [0, 1)".into()));
        }
        if !(o.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be >= 0".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::Config("fd_step must be positive".into()));
        }
        if !(self.bias_init_std >= 0.0) {
            return Err(Error::Config("bias_init_std must be >= 0".into()));
        }
        if self.etas.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::Config("sweep step sizes must be positive".into()));
        }
        self.dataset.validate()
    }

    /// Canonical serialization; its hash identifies the run.
    pub fn canonical_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::new(self.seed, &self.canonical_text())
    }

    /// Creates the output directory if needed.
    pub fn prepare_output(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.output).map_err(|e| {
            Error::Config(format!("cannot create output directory {}: {e}", self.output.display()))
        })?;
        Ok(self.output.clone())
    }

    pub fn input_dim(&self, features: usize) -> usize {
        self.architecture.input_dim.unwrap_or(features)
    }

    pub fn output_dim(&self, classes: usize) -> usize {
        self.architecture.output_dim.unwrap_or(classes)
    }

    /// Loss against the one-hot row `label`.
    pub fn loss_for<T: Scalar>(&self, label: ArrayView1<'_, f64>) -> Result<LossSpec<T>> {
        LossSpec::new(self.loss, label.mapv(T::of))
    }

    /// Loss against an arbitrary target vector.
    pub fn loss_with_target<T: Scalar>(&self, target: Array1<T>) -> Result<LossSpec<T>> {
        LossSpec::new(self.loss, target)
    }
}
