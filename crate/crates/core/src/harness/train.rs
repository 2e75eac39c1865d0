//! Mini-batch SGD with Nesterov momentum and a cosine learning-rate schedule.

use std::io::Write;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::csvout::{fmt_f64, fmt_opt, write_row, Provenance};
use crate::error::{Error, Result};
use crate::fidelity::{compare, FidelityReport};
use crate::gradient::GradientBundle;
use crate::loss::Loss;
use crate::net::NetworkParams;
use crate::reference::classical_backprop;
use crate::scalar::{Precision, Scalar};

use super::config::ExperimentConfig;
use super::data::{argmax, generate_dataset, Dataset};
use super::{sample_gradient, GradientMethod};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    /// 0 is the evaluation before any update.
    pub epoch: usize,
    pub lr: Option<f64>,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub mean_iterations: Option<f64>,
    pub max_iterations: Option<usize>,
    pub nonconverged: usize,
    /// Mean over batches of the batch gradient compared against BP.
    pub fidelity: Option<FidelityReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub method: GradientMethod,
    pub layers: usize,
    pub rows: Vec<EpochRow>,
    /// Set when training stopped on a non-finite value.
    pub diverged: Option<String>,
}

impl TrainingLog {
    pub fn total_nonconverged(&self) -> usize {
        self.rows.iter().map(|r| r.nonconverged).sum()
    }

    pub fn final_row(&self) -> &EpochRow {
        self.rows.last().expect("log always holds the initial row")
    }

    pub fn csv_header(layers: usize) -> Vec<String> {
        let mut h: Vec<String> = [
            "epoch",
            "lr",
            "train_loss",
            "train_acc",
            "test_loss",
            "test_acc",
            "mean_iterations",
            "max_iterations",
            "nonconverged",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(FidelityReport::csv_header(layers));
        h
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, provenance: &Provenance) -> Result<()> {
        provenance.write_preamble(w)?;
        write_row(w, &Self::csv_header(self.layers))?;
        for r in &self.rows {
            let mut f = vec![
                r.epoch.to_string(),
                fmt_opt(r.lr),
                fmt_f64(r.train_loss),
                fmt_f64(r.train_acc),
                fmt_f64(r.test_loss),
                fmt_f64(r.test_acc),
                fmt_opt(r.mean_iterations),
                r.max_iterations.map(|v| v.to_string()).unwrap_or_else(|| "NA".into()),
                r.nonconverged.to_string(),
            ];
            match &r.fidelity {
                Some(rep) => f.extend(rep.csv_fields()),
                None => f.extend(std::iter::repeat_n("NA".to_string(), 4 + 2 * self.layers)),
            }
            write_row(w, &f)?;
        }
        Ok(())
    }
}

/// Nesterov SGD with weight decay folded into the gradient:
/// `d = g + wd * p`, `v = mu * v + d`, `p -= lr * (d + mu * v)`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    velocity: GradientBundle<T>,
    momentum: T,
    weight_decay: T,
    nesterov: bool,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(params: &NetworkParams<T>, momentum: f64, weight_decay: f64, nesterov: bool) -> Self {
        Self {
            velocity: GradientBundle::zeros_like(params),
            momentum: T::of(momentum),
            weight_decay: T::of(weight_decay),
            nesterov,
        }
    }

    pub fn step(&mut self, params: &mut NetworkParams<T>, grad: &GradientBundle<T>, lr: f64) {
        let (mu, wd, lr) = (self.momentum, self.weight_decay, T::of(lr));
        let nesterov = self.nesterov;
        let update = |p: &mut T, g: T, v: &mut T| {
            let d = g + wd * *p;
            *v = mu * *v + d;
            let dir = if nesterov { d + mu * *v } else { *v };
            *p = *p - lr * dir;
        };
        for l in 0..params.num_layers() {
            let mut w = params.weights_mut(l);
            ndarray::Zip::from(&mut w)
                .and(&grad.weights[l])
                .and(&mut self.velocity.weights[l])
                .for_each(|p, &g, v| update(p, g, v));
            let mut b = params.bias_mut(l);
            ndarray::Zip::from(&mut b)
                .and(&grad.biases[l])
                .and(&mut self.velocity.biases[l])
                .for_each(|p, &g, v| update(p, g, v));
        }
    }
}

/// Mean loss and accuracy of `params` on `data`.
pub fn evaluate<T: Scalar>(
    cfg: &ExperimentConfig,
    params: &NetworkParams<T>,
    data: &Dataset,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let x = data.features.row(i).mapv(T::of);
        let fp = params.forward_pass(x.view())?;
        let loss = cfg.loss_for::<T>(data.labels.row(i))?;
        loss_sum += loss.value(fp.output()).as_f64();
        let out = fp.output().mapv(|v| v.as_f64());
        if argmax(out.view()) == data.class_of(i) {
            correct += 1;
        }
    }
    Ok((loss_sum / data.len() as f64, correct as f64 / data.len() as f64))
}

fn initial_params<T: Scalar>(cfg: &ExperimentConfig, train: &Dataset) -> Result<NetworkParams<T>> {
    let input_dim = cfg.input_dim(train.features.ncols());
    let output_dim = cfg.output_dim(train.classes());
    if input_dim != train.features.ncols() || output_dim != train.classes() {
        return Err(Error::Config(format!(
            "architecture is {input_dim} -> {output_dim} but the data has {} features and {} classes",
            train.features.ncols(),
            train.classes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let specs = cfg.architecture.layer_specs(output_dim);
    Ok(NetworkParams::<f64>::init_gaussian(input_dim, &specs, cfg.bias_init_std, &mut rng)?.cast())
}

struct BatchOutcome<T> {
    gradient: GradientBundle<T>,
    fidelity: Option<FidelityReport>,
    iterations: Vec<usize>,
    nonconverged: usize,
}

fn batch_gradient<T: Scalar>(
    cfg: &ExperimentConfig,
    params: &NetworkParams<T>,
    features: &Array2<f64>,
    labels: &Array2<f64>,
) -> Result<BatchOutcome<T>> {
    let method = cfg.method;
    let with_reference = method != GradientMethod::Bp;
    let per_sample: Vec<_> = (0..features.nrows())
        .into_par_iter()
        .map(|i| -> Result<_> {
            let x = features.row(i).mapv(T::of);
            let loss = cfg.loss_for::<T>(labels.row(i))?;
            let g = sample_gradient(params, x.view(), &loss, method, &cfg.relax, cfg.fd_step)?;
            let reference = if with_reference {
                Some(classical_backprop(params, x.view(), &loss)?.gradient)
            } else {
                None
            };
            Ok((g, reference))
        })
        .collect::<Result<Vec<_>>>()?;

    let gradient = GradientBundle::mean(params, per_sample.iter().map(|(g, _)| &g.gradient))?;
    if !gradient.is_finite() {
        return Err(Error::NonFinite("batch gradient"));
    }
    let fidelity = if with_reference {
        let reference = GradientBundle::mean(params, per_sample.iter().filter_map(|(_, r)| r.as_ref()))?;
        Some(compare(&gradient, &reference)?)
    } else {
        None
    };
    Ok(BatchOutcome {
        gradient,
        fidelity,
        iterations: per_sample.iter().filter_map(|(g, _)| g.iterations).collect(),
        nonconverged: per_sample.iter().filter(|(g, _)| !g.converged).count(),
    })
}

/// Trains from the seeded initialization and calls `observe(epoch, params)`
/// after the initial evaluation and after every epoch.
pub fn train_observed<T: Scalar>(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    mut observe: impl FnMut(usize, &NetworkParams<T>),
) -> Result<TrainingLog> {
    cfg.validate()?;
    let mut params = initial_params::<T>(cfg, train)?;
    let o = &cfg.optimizer;
    let mut opt = Sgd::new(&params, o.momentum, o.weight_decay, o.nesterov);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5487_f1e0));
    let mut log = TrainingLog {
        method: cfg.method,
        layers: params.num_layers(),
        rows: Vec::with_capacity(o.epochs + 1),
        diverged: None,
    };

    let (train_loss, train_acc) = evaluate(cfg, &params, train)?;
    let (test_loss, test_acc) = evaluate(cfg, &params, test)?;
    log.rows.push(EpochRow {
        epoch: 0,
        lr: None,
        train_loss,
        train_acc,
        test_loss,
        test_acc,
        mean_iterations: None,
        max_iterations: None,
        nonconverged: 0,
        fidelity: None,
    });
    observe(0, &params);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=o.epochs {
        let lr = o.learning_rate(epoch - 1);
        order.shuffle(&mut rng);
        let mut iterations: Vec<usize> = Vec::new();
        let mut nonconverged = 0;
        let mut reports = Vec::new();
        for batch in order.chunks(o.batch_size) {
            let features = train.features.select(Axis(0), batch);
            let labels = train.labels.select(Axis(0), batch);
            let outcome = match batch_gradient::<T>(cfg, &params, &features, &labels) {
                Ok(b) => b,
                Err(Error::NonFinite(what)) => {
                    log.diverged = Some(format!("epoch {epoch}: non-finite {what}"));
                    return Ok(log);
                }
                Err(e) => return Err(e),
            };
            opt.step(&mut params, &outcome.gradient, lr);
            iterations.extend(outcome.iterations);
            nonconverged += outcome.nonconverged;
            reports.extend(outcome.fidelity);
        }
        let (train_loss, train_acc) = evaluate(cfg, &params, train)?;
        let (test_loss, test_acc) = evaluate(cfg, &params, test)?;
        let row = EpochRow {
            epoch,
            lr: Some(lr),
            train_loss,
            train_acc,
            test_loss,
            test_acc,
            mean_iterations: (!iterations.is_empty())
                .then(|| iterations.iter().sum::<usize>() as f64 / iterations.len() as f64),
            max_iterations: iterations.iter().copied().max(),
            nonconverged,
            fidelity: FidelityReport::mean(&reports),
        };
        let finite = train_loss.is_finite() && params.is_finite();
        log.rows.push(row);
        if !finite {
            log.diverged = Some(format!("epoch {epoch}: non-finite training loss"));
            return Ok(log);
        }
        observe(epoch, &params);
    }
    Ok(log)
}

pub fn train<T: Scalar>(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<TrainingLog> {
    train_observed::<T>(cfg, train, test, |_, _| {})
}

/// Generates and splits the configured dataset.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let data = generate_dataset(&cfg.dataset, cfg.seed)?;
    Ok(data.split(cfg.dataset.test_fraction, cfg.seed))
}

/// Full training run in the configured precision.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainingLog> {
    cfg.validate()?;
    let (train_set, test_set) = load_data(cfg)?;
    match cfg.precision {
        Precision::F32 => train::<f32>(cfg, &train_set, &test_set),
        Precision::F64 => train::<f64>(cfg, &train_set, &test_set),
    }
}
