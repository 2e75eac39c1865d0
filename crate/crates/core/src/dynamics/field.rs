use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::net::{GlobalVector, NetworkParams};
use crate::reference::check_loss;
use crate::scalar::Scalar;

use super::DyadState;

/// Everything a force evaluation needs at one point `u`: `sigma(W u + beta)`,
/// `sigma'(W u + beta)`, the embedded loss gradient and the loss value.
pub(crate) struct Local<T> {
    pub activated: GlobalVector<T>,
    pub slope: GlobalVector<T>,
    pub grad: GlobalVector<T>,
    pub cost: T,
}

/// A network, input and loss with the drive vector precomputed.
pub(crate) struct Problem<'a, T: Scalar> {
    pub params: &'a NetworkParams<T>,
    pub beta: GlobalVector<T>,
    pub loss: &'a dyn Loss<T>,
}

impl<'a, T: Scalar> Problem<'a, T> {
    pub fn new(
        params: &'a NetworkParams<T>,
        input: ArrayView1<'_, T>,
        loss: &'a dyn Loss<T>,
    ) -> Result<Self> {
        check_loss(params, loss)?;
        let beta = params.beta_drive(input)?;
        Ok(Self { params, beta, loss })
    }

    pub fn local(&self, u: &GlobalVector<T>) -> Result<Local<T>> {
        self.params.check_state(u)?;
        let pre = self.params.pre_activation(&self.beta, u)?;
        let last = u.num_blocks() - 1;
        Ok(Local {
            activated: self.params.activate(&pre),
            slope: self.params.activate_derivative(&pre),
            grad: self.loss.embedded_gradient(u),
            cost: self.loss.value(u.block(last)),
        })
    }

    /// `W^T (d .* v)`.
    pub fn backward(&self, d: &GlobalVector<T>, v: &GlobalVector<T>) -> Result<GlobalVector<T>> {
        self.params.apply_global_wt(&d.hadamard(v))
    }

    /// `s^T F(m) + C(m_L)` from a precomputed local evaluation at `m`.
    pub fn energy_from(&self, m: &GlobalVector<T>, s: &GlobalVector<T>, at_m: &Local<T>) -> T {
        let f = at_m.activated.sub(m);
        s.dot(&f) + at_m.cost
    }
}

/// `E(x, z) = (x - z)^T [sigma(W m + beta) - m] + C(m_L, y)` with `m = (x + z) / 2`.
pub fn energy<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    state: &DyadState<T>,
) -> Result<T> {
    let p = Problem::new(params, input, loss)?;
    let m = state.mean();
    let s = state.stress();
    let local = p.local(&m)?;
    let e = p.energy_from(&m, &s, &local);
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite("energy"))
    }
}

/// Saddle flow `dx = dE/dx`, `dz = -dE/dz`:
///
/// ```text
/// dx = F(m) + 1/2 (W^T D(m) - I) s + 1/2 g(m)
/// dz = F(m) - 1/2 (W^T D(m) - I) s - 1/2 g(m)
/// ```
pub fn saddle_velocities<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    state: &DyadState<T>,
) -> Result<(GlobalVector<T>, GlobalVector<T>)> {
    let p = Problem::new(params, input, loss)?;
    let m = state.mean();
    let s = state.stress();
    let local = p.local(&m)?;
    let relax = local.activated.sub(&m);
    let signal = p.backward(&local.slope, &s)?.sub(&s);
    let half = T::half();
    let push = signal.add(&local.grad).scaled(half);
    let dx = relax.add(&push);
    let dz = relax.sub(&push);
    if dx.is_finite() && dz.is_finite() {
        Ok((dx, dz))
    } else {
        Err(Error::NonFinite("saddle velocities"))
    }
}

/// Mean/stress form: `dm = sigma(W m + beta) - m`, `ds = (W^T D(m) - I) s + g(m)`.
pub fn mean_stress_velocities<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    m: &GlobalVector<T>,
    s: &GlobalVector<T>,
) -> Result<(GlobalVector<T>, GlobalVector<T>)> {
    let p = Problem::new(params, input, loss)?;
    params.check_state(s)?;
    let local = p.local(m)?;
    let dm = local.activated.sub(m);
    let ds = p.backward(&local.slope, s)?.sub(s).add(&local.grad);
    if dm.is_finite() && ds.is_finite() {
        Ok((dm, ds))
    } else {
        Err(Error::NonFinite("mean/stress velocities"))
    }
}

/// Split velocities, with drives, Jacobians and loss gradients taken at `x`
/// and `z` separately:
///
/// ```text
/// dx = S - x + 1/2 W^T D(x) s + 1/2 g(x)
/// dz = S - z - 1/2 W^T D(z) s - 1/2 g(z)
/// S  = 1/2 [sigma(W x + beta) + sigma(W z + beta)]
/// ```
pub fn split_velocities<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    state: &DyadState<T>,
) -> Result<(GlobalVector<T>, GlobalVector<T>)> {
    let p = Problem::new(params, input, loss)?;
    let (tx, tz) = split_targets(&p, state)?;
    let dx = tx.sub(&state.x);
    let dz = tz.sub(&state.z);
    if dx.is_finite() && dz.is_finite() {
        Ok((dx, dz))
    } else {
        Err(Error::NonFinite("split velocities"))
    }
}

/// Points the split flow pulls `x` and `z` towards: velocity = target - state.
pub(crate) fn split_targets<T: Scalar>(
    p: &Problem<'_, T>,
    state: &DyadState<T>,
) -> Result<(GlobalVector<T>, GlobalVector<T>)> {
    let s = state.stress();
    let at_x = p.local(&state.x)?;
    let at_z = p.local(&state.z)?;
    let half = T::half();
    let drive = at_x.activated.zip_map(&at_z.activated, |a, b| half * (a + b));
    let push_x = p.backward(&at_x.slope, &s)?.add(&at_x.grad).scaled(half);
    let push_z = p.backward(&at_z.slope, &s)?.add(&at_z.grad).scaled(half);
    Ok((drive.add(&push_x), drive.sub(&push_z)))
}
