use ndarray::ArrayView1;

use crate::error::Result;
use crate::gradient::GradientBundle;
use crate::net::{GlobalVector, NetworkParams};
use crate::scalar::Scalar;

/// Reads gradients off an equilibrium: `delta = D(m) s` blockwise, then
/// `grad W_l = delta_l m_{l-1}^T` (with `m_0` the input) and `grad b_l = delta_l`.
pub fn gradient_from_equilibrium<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    mean: &GlobalVector<T>,
    stress: &GlobalVector<T>,
) -> Result<GradientBundle<T>> {
    params.check_state(stress)?;
    let slope = params.local_derivative_diag(input, mean)?;
    let deltas = slope.hadamard(stress);
    GradientBundle::from_outer_products(params, input, mean, &deltas)
}
