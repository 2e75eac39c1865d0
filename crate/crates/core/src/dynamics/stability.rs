use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::net::{GlobalVector, NetworkParams};
use crate::scalar::Scalar;

/// Nilpotency diagnostics for the linearization at the forward fixed point.
///
/// `J_mm + I` acts as `v -> D(m) W v` and `J_ss + I` as `v -> W^T D(m) v`.
/// Both are strictly block-triangular, so `L` applications annihilate every
/// vector and every eigenvalue of `J_mm` and `J_ss` is `-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub layers: usize,
    pub probes: usize,
    /// Largest `||(J_mm + I)^L v||` over the probes.
    pub mean_residual: f64,
    /// Largest `||(J_ss + I)^L v||` over the probes.
    pub stress_residual: f64,
    /// Smallest power that zeroed every probe under `J_mm + I`.
    pub mean_index: usize,
    /// Smallest power that zeroed every probe under `J_ss + I`.
    pub stress_index: usize,
}

impl StabilityReport {
    pub fn max_residual(&self) -> f64 {
        self.mean_residual.max(self.stress_residual)
    }
}

pub fn stability_check<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
) -> Result<StabilityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    stability_check_with(params, input, 8, &mut rng)
}

pub fn stability_check_with<T: Scalar, R: Rng + ?Sized>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    probes: usize,
    rng: &mut R,
) -> Result<StabilityReport> {
    let m_bar = params.forward_pass(input)?.stacked;
    let slope = params.local_derivative_diag(input, &m_bar)?;
    let layers = params.num_layers();

    let mut report = StabilityReport {
        layers,
        probes,
        mean_residual: 0.0,
        stress_residual: 0.0,
        mean_index: 0,
        stress_index: 0,
    };
    for _ in 0..probes {
        let data = Array1::from_shape_simple_fn(params.state_dim(), || {
            T::of(rng.sample::<f64, _>(StandardNormal))
        });
        let probe = GlobalVector::from_data(params.layout().clone(), data)?;

        let (res, idx) = annihilate(&probe, layers, |v| Ok(slope.hadamard(&params.apply_global_w(v)?)))?;
        report.mean_residual = report.mean_residual.max(res);
        report.mean_index = report.mean_index.max(idx);

        let (res, idx) = annihilate(&probe, layers, |v| params.apply_global_wt(&slope.hadamard(v)))?;
        report.stress_residual = report.stress_residual.max(res);
        report.stress_index = report.stress_index.max(idx);
    }
    Ok(report)
}

/// Applies `op` `layers` times; returns the final norm and the first power at
/// which the iterate became exactly zero (or `layers + 1` if it never did).
fn annihilate<T: Scalar>(
    start: &GlobalVector<T>,
    layers: usize,
    op: impl Fn(&GlobalVector<T>) -> Result<GlobalVector<T>>,
) -> Result<(f64, usize)> {
    let mut v = start.clone();
    let mut index = layers + 1;
    for k in 1..=layers {
        v = op(&v)?;
        if index > layers && v.data().iter().all(|&e| e == T::zero()) {
            index = k;
        }
    }
    Ok((v.norm().as_f64(), index))
}
