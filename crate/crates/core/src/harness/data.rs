//! Synthetic and file-backed classification datasets.

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::csvout::{fmt_f64, write_row, Provenance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    TwoMoons,
    Spirals,
    GaussianBlobs,
    CsvFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub samples: usize,
    /// Standard deviation of the Gaussian jitter (cluster spread for blobs).
    pub noise: f64,
    pub classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Rescale features to zero mean and unit variance per column.
    pub standardize: bool,
    /// Fraction of samples held out for evaluation.
    pub test_fraction: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::TwoMoons,
            samples: 1000,
            noise: 0.1,
            classes: 2,
            path: None,
            standardize: true,
            test_fraction: 0.2,
        }
    }
}

impl DatasetSpec {
    pub fn two_moons(samples: usize, noise: f64) -> Self {
        Self {
            samples,
            noise,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!(
                "test_fraction must lie in [0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        match self.kind {
            DatasetKind::CsvFile => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("csv_file dataset needs `path`".into()))?;
                if !path.is_file() {
                    return Err(Error::Config(format!("dataset file {} not found", path.display())));
                }
            }
            DatasetKind::TwoMoons if self.classes != 2 => {
                return Err(Error::Config("two_moons has exactly 2 classes".into()));
            }
            _ => {
                if self.classes < 2 {
                    return Err(Error::Config("need at least 2 classes".into()));
                }
            }
        }
        if self.kind != DatasetKind::CsvFile && self.samples < self.classes {
            return Err(Error::Config("fewer samples than classes".into()));
        }
        Ok(())
    }

    /// Feature dimension without loading anything for synthetic kinds.
    pub fn feature_dim(&self) -> Result<usize> {
        match self.kind {
            DatasetKind::CsvFile => Ok(generate_dataset(self, 0)?.features.ncols()),
            _ => Ok(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One row per sample.
    pub features: Array2<f64>,
    /// One-hot rows.
    pub labels: Array2<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> usize {
        self.labels.ncols()
    }

    pub fn class_of(&self, i: usize) -> usize {
        argmax(self.labels.row(i))
    }

    fn from_parts(features: Array2<f64>, classes: &[usize], num_classes: usize) -> Self {
        let mut labels = Array2::zeros((classes.len(), num_classes));
        for (i, &c) in classes.iter().enumerate() {
            labels[(i, c)] = 1.0;
        }
        Self { features, labels }
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            labels: self.labels.select(Axis(0), rows),
        }
    }

    /// Seeded shuffle, then the first `test_fraction` of rows become the test set.
    pub fn split(&self, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_5e7);
        idx.shuffle(&mut rng);
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (test, train) = idx.split_at(n_test);
        (self.select(train), self.select(test))
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, provenance: &Provenance) -> Result<()> {
        provenance.write_preamble(w)?;
        let mut header: Vec<String> = (1..=self.features.ncols()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        write_row(w, &header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.features.row(i).iter().map(|&v| fmt_f64(v)).collect();
            row.push(self.class_of(i).to_string());
            write_row(w, &row)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, provenance: &Provenance) -> Result<()> {
        let mut f = File::create(path)?;
        self.write_csv(&mut f, provenance)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn class_sizes(samples: usize, classes: usize) -> Vec<usize> {
    (0..classes)
        .map(|c| samples / classes + usize::from(c < samples % classes))
        .collect()
}

fn linspace(n: usize, end: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if n > 1 { end * i as f64 / (n - 1) as f64 } else { 0.0 })
}

/// Unstandardized points. Moons: outer `(cos t, sin t)`, inner
/// `(1 - cos t, 0.5 - sin t)`, `t` evenly spaced on `[0, pi]`.
pub fn generate_raw(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(spec.samples);
    let mut classes = Vec::with_capacity(spec.samples);
    match spec.kind {
        DatasetKind::TwoMoons => {
            let n_outer = spec.samples / 2;
            let n_inner = spec.samples - n_outer;
            for t in linspace(n_outer, PI) {
                points.push([t.cos(), t.sin()]);
                classes.push(0);
            }
            for t in linspace(n_inner, PI) {
                points.push([1.0 - t.cos(), 0.5 - t.sin()]);
                classes.push(1);
            }
        }
        DatasetKind::Spirals => {
            for (c, n) in class_sizes(spec.samples, spec.classes).into_iter().enumerate() {
                let phase = 2.0 * PI * c as f64 / spec.classes as f64;
                for r in linspace(n, 1.0) {
                    let theta = phase + 4.0 * PI * r;
                    points.push([r * theta.cos(), r * theta.sin()]);
                    classes.push(c);
                }
            }
        }
        DatasetKind::GaussianBlobs => {
            for (c, n) in class_sizes(spec.samples, spec.classes).into_iter().enumerate() {
                let angle = 2.0 * PI * c as f64 / spec.classes as f64;
                for _ in 0..n {
                    points.push([3.0 * angle.cos(), 3.0 * angle.sin()]);
                    classes.push(c);
                }
            }
        }
        DatasetKind::CsvFile => {
            let path = spec.path.as_deref().expect("validated");
            return read_csv(path, spec.classes);
        }
    }
    let mut features = Array2::zeros((points.len(), 2));
    for (i, p) in points.iter().enumerate() {
        for j in 0..2 {
            let jitter = if spec.noise > 0.0 {
                spec.noise * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            features[(i, j)] = p[j] + jitter;
        }
    }
    Ok(Dataset::from_parts(features, &classes, spec.classes))
}

/// Deterministic in `(spec, seed)`; standardized when `spec.standardize`.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    let mut data = generate_raw(spec, seed)?;
    if spec.standardize {
        standardize(&mut data.features);
    }
    Ok(data)
}

/// Zero mean and unit (population) variance per column. Constant columns are
/// only centered.
pub fn standardize(features: &mut Array2<f64>) {
    let n = features.nrows() as f64;
    if n == 0.0 {
        return;
    }
    for mut col in features.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let scale = if std > 0.0 { std } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / scale);
    }
}

/// Reads a rectangular CSV whose last column is an integer class label.
/// `#` lines are comments; a non-numeric first row is treated as a header.
/// The class count is `max(label) + 1` unless `min_classes` is larger.
pub fn read_csv(path: &Path, min_classes: usize) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::Data(format!("row {}: {e}", line + 1)));
            }
        };
        if values.len() < 2 {
            return Err(Error::Data(format!("row {} needs features and a label", line + 1)));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Data(format!(
                    "row {} has {} columns, expected {w}",
                    line + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        let label = *values.last().unwrap();
        if label < 0.0 || label.fract() != 0.0 || !label.is_finite() {
            return Err(Error::Data(format!("row {}: label {label} is not a class index", line + 1)));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {} has non-finite features", line + 1)));
        }
        labels.push(label as usize);
        rows.push(values[..values.len() - 1].to_vec());
    }
    let width = width.ok_or_else(|| Error::Data("dataset file has no rows".into()))? - 1;
    let num_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0).max(min_classes);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((labels.len(), width), flat)
        .map_err(|e| Error::Data(e.to_string()))?;
    Ok(Dataset::from_parts(features, &labels, num_classes))
}

/// Features of row `i` as an owned vector.
pub fn row(data: &Array2<f64>, i: usize) -> Array1<f64> {
    data.row(i).to_owned()
}
