//! Gradient-fidelity metrics between a candidate gradient and a reference.

use serde_json::{Map, Value};

use crate::csvout::{fmt_f64, fmt_opt};
use crate::error::{Error, Result};
use crate::gradient::GradientBundle;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    /// Cosine over the full flattened bundles.
    pub cosine_similarity: f64,
    /// `||test - ref|| / ||ref||`; `None` when the reference is zero.
    pub relative_error: Option<f64>,
    /// `||test|| / ||ref||`; `None` when the reference is zero.
    pub norm_ratio: Option<f64>,
    /// `||ref||^2 / ||test - ref||^2`; `None` when the reference is zero and
    /// `+inf` when the two bundles coincide.
    pub snr: Option<f64>,
    pub per_layer_cosine: Vec<f64>,
    /// `log10(max(1 - cos_l, floor))` per layer.
    pub per_layer_log_misalignment: Vec<f64>,
}

/// `log10(max(1 - cos, floor))`.
pub fn log_misalignment(cos: f64, precision_floor: f64) -> f64 {
    (1.0 - cos).max(precision_floor).log10()
}

#[derive(Default)]
struct Sums {
    tt: f64,
    rr: f64,
    tr: f64,
    dd: f64,
}

impl Sums {
    fn push(&mut self, t: f64, r: f64) {
        self.tt += t * t;
        self.rr += r * r;
        self.tr += t * r;
        self.dd += (t - r) * (t - r);
    }

    fn cosine(&self) -> f64 {
        match (self.tt == 0.0, self.rr == 0.0) {
            (true, true) => 1.0,
            (true, false) | (false, true) => 0.0,
            _ => (self.tr / (self.tt * self.rr).sqrt()).clamp(-1.0, 1.0),
        }
    }
}

/// Compares `test` against `reference` using the misalignment floor of `T`.
pub fn compare<T: Scalar>(
    test: &GradientBundle<T>,
    reference: &GradientBundle<T>,
) -> Result<FidelityReport> {
    compare_with_floor(test, reference, T::PRECISION.misalignment_floor())
}

pub fn compare_with_floor<T: Scalar>(
    test: &GradientBundle<T>,
    reference: &GradientBundle<T>,
    floor: f64,
) -> Result<FidelityReport> {
    if !test.same_shape(reference) {
        return Err(Error::Shape {
            context: "fidelity comparison",
            expected: reference.values().count(),
            actual: test.values().count(),
        });
    }
    let mut total = Sums::default();
    let mut per_layer_cosine = Vec::with_capacity(test.num_layers());
    for l in 0..test.num_layers() {
        let mut layer = Sums::default();
        for (t, r) in test.layer_values(l).zip(reference.layer_values(l)) {
            let (t, r) = (t.as_f64(), r.as_f64());
            layer.push(t, r);
            total.push(t, r);
        }
        per_layer_cosine.push(layer.cosine());
    }
    let defined = total.rr > 0.0;
    let relative_error = defined.then(|| (total.dd / total.rr).sqrt());
    let norm_ratio = defined.then(|| (total.tt / total.rr).sqrt());
    let snr = defined.then(|| {
        if total.dd == 0.0 {
            f64::INFINITY
        } else {
            total.rr / total.dd
        }
    });
    let per_layer_log_misalignment = per_layer_cosine
        .iter()
        .map(|&c| log_misalignment(c, floor))
        .collect();
    Ok(FidelityReport {
        cosine_similarity: total.cosine(),
        relative_error,
        norm_ratio,
        snr,
        per_layer_cosine,
        per_layer_log_misalignment,
    })
}

impl FidelityReport {
    pub fn num_layers(&self) -> usize {
        self.per_layer_cosine.len()
    }

    pub fn csv_header(layers: usize) -> Vec<String> {
        let mut h = vec![
            "cos".to_string(),
            "rel_err".into(),
            "norm_ratio".into(),
            "snr".into(),
        ];
        h.extend((1..=layers).map(|i| format!("layer_{i}_cos")));
        h.extend((1..=layers).map(|i| format!("layer_{i}_logmis")));
        h
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let mut f = vec![
            fmt_f64(self.cosine_similarity),
            fmt_opt(self.relative_error),
            fmt_opt(self.norm_ratio),
            fmt_opt(self.snr),
        ];
        f.extend(self.per_layer_cosine.iter().map(|&v| fmt_f64(v)));
        f.extend(self.per_layer_log_misalignment.iter().map(|&v| fmt_f64(v)));
        f
    }

    /// Flat record with the CSV column names. Undefined metrics are `null`,
    /// infinite ones the string `"inf"`.
    pub fn to_json(&self) -> Value {
        fn num(v: f64) -> Value {
            if v.is_finite() {
                Value::from(v)
            } else {
                Value::from(fmt_f64(v))
            }
        }
        fn opt(v: Option<f64>) -> Value {
            v.map(num).unwrap_or(Value::Null)
        }
        let mut map = Map::new();
        map.insert("cos".into(), num(self.cosine_similarity));
        map.insert("rel_err".into(), opt(self.relative_error));
        map.insert("norm_ratio".into(), opt(self.norm_ratio));
        map.insert("snr".into(), opt(self.snr));
        for (i, &c) in self.per_layer_cosine.iter().enumerate() {
            map.insert(format!("layer_{}_cos", i + 1), num(c));
        }
        for (i, &c) in self.per_layer_log_misalignment.iter().enumerate() {
            map.insert(format!("layer_{}_logmis", i + 1), num(c));
        }
        Value::Object(map)
    }

    /// Field-wise mean. Optional metrics average over the reports that define them.
    pub fn mean(reports: &[FidelityReport]) -> Option<FidelityReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let layers = first.num_layers();
        let avg = |f: &dyn Fn(&FidelityReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: &dyn Fn(&FidelityReport) -> Option<f64>| {
            let vals: Vec<f64> = reports.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        Some(FidelityReport {
            cosine_similarity: avg(&|r| r.cosine_similarity),
            relative_error: avg_opt(&|r| r.relative_error),
            norm_ratio: avg_opt(&|r| r.norm_ratio),
            snr: avg_opt(&|r| r.snr),
            per_layer_cosine: (0..layers).map(|l| avg(&|r| r.per_layer_cosine[l])).collect(),
            per_layer_log_misalignment: (0..layers)
                .map(|l| avg(&|r| r.per_layer_log_misalignment[l]))
                .collect(),
        })
    }
}
