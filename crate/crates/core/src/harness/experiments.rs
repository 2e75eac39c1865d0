//! Gradient checks, step-size sweeps and single-sample trajectories on random instances.

use std::io::Write;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::csvout::{fmt_f64, fmt_opt, write_row, Provenance};
use crate::dynamics::{relax, RelaxTrace};
use crate::error::{Error, Result};
use crate::fidelity::{compare, FidelityReport};
use crate::loss::LossSpec;
use crate::net::NetworkParams;
use crate::reference::classical_backprop;
use crate::scalar::{Precision, Scalar};

use super::config::{ExperimentConfig, RelaxSettings};
use super::{sample_gradient, GradientMethod};

/// A random network with a random input and target.
#[derive(Debug, Clone)]
pub struct Instance<T> {
    pub params: NetworkParams<T>,
    pub input: Array1<T>,
    pub loss: LossSpec<T>,
}

/// Draws `count` instances for the configured architecture. Parameters are
/// drawn in 64-bit and rounded, so both precisions see the same networks.
pub fn random_instances<T: Scalar>(cfg: &ExperimentConfig, count: usize) -> Result<Vec<Instance<T>>> {
    let input_dim = match cfg.architecture.input_dim {
        Some(d) => d,
        None => cfg.dataset.feature_dim()?,
    };
    let output_dim = cfg.output_dim(cfg.dataset.classes);
    let specs = cfg.architecture.layer_specs(output_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..count)
        .map(|_| {
            let params = NetworkParams::<f64>::init_gaussian(input_dim, &specs, cfg.bias_init_std, &mut rng)?;
            let input = Array1::from_shape_simple_fn(input_dim, || rng.sample::<f64, _>(StandardNormal));
            let target = match cfg.loss {
                crate::loss::LossKind::SoftmaxCrossEntropy => {
                    let mut t = Array1::zeros(output_dim);
                    t[rng.random_range(0..output_dim)] = 1.0;
                    t
                }
                crate::loss::LossKind::Mse => {
                    Array1::from_shape_simple_fn(output_dim, || rng.sample::<f64, _>(StandardNormal))
                }
            };
            Ok(Instance {
                params: params.cast(),
                input: input.mapv(T::of),
                loss: cfg.loss_with_target(target.mapv(T::of))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub trial: usize,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub report: FidelityReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub method: GradientMethod,
    pub precision: Precision,
    pub layers: usize,
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub fn nonconverged(&self) -> usize {
        self.rows.iter().filter(|r| !r.converged).count()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, provenance: &Provenance) -> Result<()> {
        provenance.write_preamble(w)?;
        let mut header = vec![
            "trial".to_string(),
            "method".into(),
            "precision".into(),
            "iterations".into(),
            "converged".into(),
        ];
        header.extend(FidelityReport::csv_header(self.layers));
        write_row(w, &header)?;
        for r in &self.rows {
            let mut f = vec![
                r.trial.to_string(),
                self.method.to_string(),
                self.precision.to_string(),
                r.iterations.map(|k| k.to_string()).unwrap_or_else(|| "NA".into()),
                r.converged.to_string(),
            ];
            f.extend(r.report.csv_fields());
            write_row(w, &f)?;
        }
        Ok(())
    }
}

fn check_instances<T: Scalar>(
    cfg: &ExperimentConfig,
    instances: &[Instance<T>],
    relax_cfg: &RelaxSettings,
) -> Result<Vec<CheckRow>> {
    instances
        .iter()
        .enumerate()
        .map(|(trial, inst)| {
            let x = inst.input.view();
            let reference = classical_backprop(&inst.params, x, &inst.loss)?.gradient;
            let g = sample_gradient(&inst.params, x, &inst.loss, cfg.method, relax_cfg, cfg.fd_step)?;
            Ok(CheckRow {
                trial,
                iterations: g.iterations,
                converged: g.converged,
                report: compare(&g.gradient, &reference)?,
            })
        })
        .collect()
}

/// One row per fresh random instance: the configured method against BP.
pub fn check_gradients<T: Scalar>(cfg: &ExperimentConfig, trials: usize) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    cfg.validate()?;
    let instances = random_instances::<T>(cfg, trials)?;
    Ok(CheckReport {
        method: cfg.method,
        precision: T::PRECISION,
        layers: cfg.architecture.num_layers(),
        rows: check_instances(cfg, &instances, &cfg.relax)?,
    })
}

pub fn run_check(cfg: &ExperimentConfig) -> Result<CheckReport> {
    match cfg.precision {
        Precision::F32 => check_gradients::<f32>(cfg, cfg.trials),
        Precision::F64 => check_gradients::<f64>(cfg, cfg.trials),
    }
}

/// Per-instance results at one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    pub rows: Vec<CheckRow>,
}

impl SweepRow {
    fn iterations(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().filter_map(|r| r.iterations)
    }

    pub fn mean_iterations(&self) -> Option<f64> {
        let n = self.iterations().count();
        (n > 0).then(|| self.iterations().sum::<usize>() as f64 / n as f64)
    }

    pub fn max_iterations(&self) -> Option<usize> {
        self.iterations().max()
    }

    pub fn min_iterations(&self) -> Option<usize> {
        self.iterations().min()
    }

    pub fn converged_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.converged).count() as f64 / self.rows.len() as f64
    }

    fn norm_ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().filter_map(|r| r.report.norm_ratio)
    }

    pub fn norm_ratio_range(&self) -> Option<(f64, f64)> {
        let lo = self.norm_ratios().fold(f64::INFINITY, f64::min);
        let hi = self.norm_ratios().fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some((lo, hi))
    }

    /// Largest per-layer log-misalignment over all instances.
    pub fn worst_log_misalignment(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.report.per_layer_log_misalignment.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_report(&self) -> FidelityReport {
        let reports: Vec<_> = self.rows.iter().map(|r| r.report.clone()).collect();
        FidelityReport::mean(&reports).expect("sweep rows are nonempty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub method: GradientMethod,
    pub precision: Precision,
    pub layers: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn nonconverged(&self) -> usize {
        self.rows
            .iter()
            .flat_map(|r| &r.rows)
            .filter(|r| !r.converged)
            .count()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, provenance: &Provenance) -> Result<()> {
        provenance.write_preamble(w)?;
        let mut header: Vec<String> = [
            "eta",
            "trials",
            "mean_iterations",
            "min_iterations",
            "max_iterations",
            "converged_fraction",
            "norm_ratio_min",
            "norm_ratio_max",
            "worst_logmis",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(FidelityReport::csv_header(self.layers));
        write_row(w, &header)?;
        let count = |v: Option<usize>| v.map(|k| k.to_string()).unwrap_or_else(|| "NA".into());
        for r in &self.rows {
            let range = r.norm_ratio_range();
            let mut f = vec![
                fmt_f64(r.eta),
                r.rows.len().to_string(),
                fmt_opt(r.mean_iterations()),
                count(r.min_iterations()),
                count(r.max_iterations()),
                fmt_f64(r.converged_fraction()),
                fmt_opt(range.map(|p| p.0)),
                fmt_opt(range.map(|p| p.1)),
                fmt_f64(r.worst_log_misalignment()),
            ];
            f.extend(r.mean_report().csv_fields());
            write_row(w, &f)?;
        }
        Ok(())
    }
}

/// Runs the configured method at every step size on the same instances.
pub fn sweep_eta<T: Scalar>(cfg: &ExperimentConfig, etas: &[f64]) -> Result<SweepReport> {
    if etas.is_empty() {
        return Err(Error::Config("step-size list is empty".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    cfg.validate()?;
    let instances = random_instances::<T>(cfg, cfg.trials)?;
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let settings = RelaxSettings { eta, ..cfg.relax };
        settings.to_config(Default::default()).validate()?;
        rows.push(SweepRow {
            eta,
            rows: check_instances(cfg, &instances, &settings)?,
        });
    }
    Ok(SweepReport {
        method: cfg.method,
        precision: T::PRECISION,
        layers: cfg.architecture.num_layers(),
        rows,
    })
}

pub fn run_sweep(cfg: &ExperimentConfig, etas: &[f64]) -> Result<SweepReport> {
    match cfg.precision {
        Precision::F32 => sweep_eta::<f32>(cfg, etas),
        Precision::F64 => sweep_eta::<f64>(cfg, etas),
    }
}

/// Relaxation trace of the first random instance.
pub fn relax_trajectory<T: Scalar>(cfg: &ExperimentConfig) -> Result<RelaxTrace> {
    let mode = cfg.method.relax_mode().ok_or_else(|| {
        Error::Config(format!("method `{}` has no relaxation trajectory", cfg.method))
    })?;
    cfg.validate()?;
    let inst = random_instances::<T>(cfg, 1)?.remove(0);
    let r = relax(&inst.params, inst.input.view(), &inst.loss, &cfg.relax.to_config(mode))?;
    Ok(r.trace)
}

pub fn run_relax(cfg: &ExperimentConfig) -> Result<RelaxTrace> {
    match cfg.precision {
        Precision::F32 => relax_trajectory::<f32>(cfg),
        Precision::F64 => relax_trajectory::<f64>(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ArchitectureConfig;
    use crate::net::Activation;

    fn cfg(method: GradientMethod) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.method = method;
        c.trials = 4;
        c.architecture = ArchitectureConfig::mlp(vec![6, 5], Activation::Tanh);
        c
    }

    #[test]
    fn check_rows_carry_iterations_only_for_relaxation() {
        let bp = check_gradients::<f64>(&cfg(GradientMethod::Bp), 3).unwrap();
        assert!(bp.rows.iter().all(|r| r.iterations.is_none() && r.report.relative_error == Some(0.0)));
        let d = check_gradients::<f64>(&cfg(GradientMethod::Dyadic), 3).unwrap();
        assert!(d.rows.iter().all(|r| r.iterations.unwrap() <= 7));
    }

    #[test]
    fn singleton_sweep_matches_check() {
        let c = cfg(GradientMethod::Dyadic);
        let s = sweep_eta::<f64>(&c, &[c.relax.eta]).unwrap();
        let k = check_gradients::<f64>(&c, c.trials).unwrap();
        assert_eq!(s.rows[0].rows, k.rows);
    }

    #[test]
    fn rejects_empty_inputs() {
        let c = cfg(GradientMethod::Dyadic);
        assert!(matches!(sweep_eta::<f64>(&c, &[]), Err(Error::Config(_))));
        assert!(matches!(check_gradients::<f64>(&c, 0), Err(Error::Config(_))));
        assert!(matches!(sweep_eta::<f64>(&c, &[-1.0]), Err(Error::Config(_))));
        assert!(matches!(relax_trajectory::<f64>(&cfg(GradientMethod::Bp)), Err(Error::Config(_))));
    }
}
