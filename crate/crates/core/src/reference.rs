//! Independent gradient oracles: layer-wise backpropagation, central finite
//! differences, and the finite Neumann series for the equilibrium stress.

use ndarray::ArrayView1;

use crate::error::{check_len, Error, Result};
use crate::gradient::GradientBundle;
use crate::loss::Loss;
use crate::net::{GlobalVector, NetworkParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Backprop<T> {
    pub gradient: GradientBundle<T>,
    /// Stacked `grad_{a_l} C` for every layer.
    pub sensitivities: GlobalVector<T>,
    /// Stacked forward activations.
    pub activations: GlobalVector<T>,
    pub loss: T,
}

pub(crate) fn check_loss<T: Scalar>(params: &NetworkParams<T>, loss: &dyn Loss<T>) -> Result<()> {
    check_len("loss target", params.output_dim(), loss.output_dim())
}

/// Classical two-phase backpropagation.
pub fn classical_backprop<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
) -> Result<Backprop<T>> {
    check_loss(params, loss)?;
    let fp = params.forward_pass(input)?;
    let grad_out = loss.gradient(fp.output());
    if !grad_out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("loss gradient"));
    }
    let num_layers = params.num_layers();
    let mut sensitivities = params.zeros();
    let mut deltas = params.zeros();

    let mut upstream = grad_out;
    for l in (0..num_layers).rev() {
        let act = params.layer(l).spec.activation;
        let delta = &upstream * &fp.pre_activations[l].mapv(|z| act.derivative(z));
        sensitivities.block_mut(l).assign(&upstream);
        if l > 0 {
            upstream = params.layer(l).weights.t().dot(&delta);
        }
        deltas.block_mut(l).assign(&delta);
    }

    let gradient = GradientBundle::from_outer_products(params, input, &fp.stacked, &deltas)?;
    let value = loss.value(fp.output());
    Ok(Backprop {
        gradient,
        sensitivities,
        activations: fp.stacked,
        loss: value,
    })
}

/// Loss of a plain forward pass.
pub fn loss_at<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
) -> Result<T> {
    check_loss(params, loss)?;
    let fp = params.forward_pass(input)?;
    let v = loss.value(fp.output());
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("loss value"))
    }
}

/// Central differences `(C(theta + h e) - C(theta - h e)) / 2h` for every parameter.
pub fn finite_difference_grad<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    h: T,
) -> Result<GradientBundle<T>> {
    if !(h > T::zero()) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    check_loss(params, loss)?;
    let two_h = h + h;
    let mut work = params.clone();
    let mut out = GradientBundle::zeros_like(params);

    for l in 0..params.num_layers() {
        let (rows, cols) = params.layer(l).weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = work.weights_mut(l)[(i, j)];
                work.weights_mut(l)[(i, j)] = orig + h;
                let plus = loss_at(&work, input, loss)?;
                work.weights_mut(l)[(i, j)] = orig - h;
                let minus = loss_at(&work, input, loss)?;
                work.weights_mut(l)[(i, j)] = orig;
                out.weights[l][(i, j)] = (plus - minus) / two_h;
            }
        }
        for i in 0..rows {
            let orig = work.bias_mut(l)[i];
            work.bias_mut(l)[i] = orig + h;
            let plus = loss_at(&work, input, loss)?;
            work.bias_mut(l)[i] = orig - h;
            let minus = loss_at(&work, input, loss)?;
            work.bias_mut(l)[i] = orig;
            out.biases[l][i] = (plus - minus) / two_h;
        }
    }
    Ok(out)
}

/// Equilibrium stress as the finite series `sum_{k<L} (W^T D)^k g`, with `D`
/// evaluated at the forward fixed point and `g` the loss gradient on block `L`.
pub fn neumann_stress<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
) -> Result<GlobalVector<T>> {
    check_loss(params, loss)?;
    let fp = params.forward_pass(input)?;
    let d_bar = params.local_derivative_diag(input, &fp.stacked)?;
    let g = loss.embedded_gradient(&fp.stacked);
    if !g.is_finite() {
        return Err(Error::NonFinite("loss gradient"));
    }
    let mut sum = g.clone();
    let mut term = g;
    for _ in 1..params.num_layers() {
        term = params.apply_global_wt(&d_bar.hadamard(&term))?;
        sum = sum.add(&term);
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossSpec;
    use crate::net::{Activation, Layer, LayerSpec};
    use ndarray::array;

    fn identity_layer() -> NetworkParams<f64> {
        NetworkParams::new(
            2,
            vec![Layer {
                spec: LayerSpec::new(2, Activation::Identity),
                weights: array![[0.5, -1.0], [2.0, 0.25]],
                bias: array![0.1, -0.3],
            }],
        )
        .unwrap()
    }

    #[test]
    fn single_identity_layer_closed_form() {
        let net = identity_layer();
        let x = array![1.5, -2.0];
        let y = array![0.2, 0.7];
        let loss = LossSpec::mse(y.clone()).unwrap();
        let bp = classical_backprop(&net, x.view(), &loss).unwrap();
        let err = net.layer(0).weights.dot(&x) + &net.layer(0).bias - &y;
        for i in 0..2 {
            for j in 0..2 {
                assert!((bp.gradient.weights[0][(i, j)] - err[i] * x[j]).abs() < 1e-15);
            }
            assert!((bp.gradient.biases[0][i] - err[i]).abs() < 1e-15);
        }
        let s = neumann_stress(&net, x.view(), &loss).unwrap();
        assert_eq!(s.data(), &err);
    }

    #[test]
    fn zero_loss_gradient_gives_zero_bundle() {
        let net = identity_layer();
        let x = array![1.0, 1.0];
        let out = net.forward_pass(x.view()).unwrap().stacked.into_data();
        let loss = LossSpec::mse(out).unwrap();
        let bp = classical_backprop(&net, x.view(), &loss).unwrap();
        assert!(bp.gradient.values().all(|v| v == 0.0));
        let s = neumann_stress(&net, x.view(), &loss).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_step_and_shapes() {
        let net = identity_layer();
        let loss = LossSpec::mse(array![0.0, 0.0]).unwrap();
        assert!(finite_difference_grad(&net, array![1.0, 0.0].view(), &loss, 0.0).is_err());
        let wrong = LossSpec::mse(array![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            classical_backprop(&net, array![1.0, 0.0].view(), &wrong),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn non_finite_loss_gradient_is_a_numeric_error() {
        let net = NetworkParams::new(
            1,
            vec![Layer {
                spec: LayerSpec::new(1, Activation::Identity),
                weights: array![[1e308]],
                bias: array![0.0],
            }],
        )
        .unwrap();
        let loss = LossSpec::mse(array![-1e308]).unwrap();
        let res = classical_backprop(&net, array![10.0].view(), &loss);
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }
}
