//! Forward-Euler relaxations.
//!
//! Every update `u + eta * (target - u)` is evaluated as
//! `(1 - eta) * u + eta * target`. The two are the same Euler step, but the
//! second makes a unit step drop the inertial term exactly, so `eta = 1`
//! reproduces the discrete maps bit for bit.

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::net::{GlobalVector, NetworkParams};
use crate::scalar::Scalar;

use super::extract::gradient_from_equilibrium;
use super::field::{split_targets, Problem};
use super::{DyadState, RelaxConfig, RelaxMode, RelaxTrace, Relaxation, TraceRecord};
use crate::gradient::GradientBundle;

fn euler<T: Scalar>(u: &GlobalVector<T>, target: &GlobalVector<T>, eta: T) -> GlobalVector<T> {
    let keep = T::one() - eta;
    u.zip_map(target, |a, b| keep * a + eta * b)
}

trait Scheme<T: Scalar> {
    type State: Clone;

    fn init(&self) -> Self::State;

    /// One Euler step. Returns the new state and the energy of the old one.
    fn step(&self, state: &Self::State, eta: T) -> Result<(Self::State, T)>;

    /// Summed L2 norms of the two state increments.
    fn delta(&self, old: &Self::State, new: &Self::State) -> T;

    fn mean_stress(&self, state: &Self::State) -> (GlobalVector<T>, GlobalVector<T>);

    fn is_finite(&self, state: &Self::State) -> bool;
}

struct DyadicScheme<'a, T: Scalar>(Problem<'a, T>);

impl<T: Scalar> Scheme<T> for DyadicScheme<'_, T> {
    type State = DyadState<T>;

    fn init(&self) -> DyadState<T> {
        DyadState::symmetric(self.0.params.zeros())
    }

    fn step(&self, st: &DyadState<T>, eta: T) -> Result<(DyadState<T>, T)> {
        let p = &self.0;
        let m = st.mean();
        let s = st.stress();
        let local = p.local(&m)?;
        let energy = p.energy_from(&m, &s, &local);
        // dx = sigma(W m + beta) - x + 1/2 W^T D s + 1/2 g, and symmetrically for z
        let push = p.backward(&local.slope, &s)?.add(&local.grad).scaled(T::half());
        let tx = local.activated.add(&push);
        let tz = local.activated.sub(&push);
        let next = DyadState {
            x: euler(&st.x, &tx, eta),
            z: euler(&st.z, &tz, eta),
        };
        Ok((next, energy))
    }

    fn delta(&self, old: &DyadState<T>, new: &DyadState<T>) -> T {
        new.x.distance(&old.x) + new.z.distance(&old.z)
    }

    fn mean_stress(&self, st: &DyadState<T>) -> (GlobalVector<T>, GlobalVector<T>) {
        (st.mean(), st.stress())
    }

    fn is_finite(&self, st: &DyadState<T>) -> bool {
        st.is_finite()
    }
}

struct SplitScheme<'a, T: Scalar>(Problem<'a, T>);

impl<T: Scalar> Scheme<T> for SplitScheme<'_, T> {
    type State = DyadState<T>;

    fn init(&self) -> DyadState<T> {
        DyadState::symmetric(self.0.params.zeros())
    }

    fn step(&self, st: &DyadState<T>, eta: T) -> Result<(DyadState<T>, T)> {
        let p = &self.0;
        let m = st.mean();
        let s = st.stress();
        let energy = p.energy_from(&m, &s, &p.local(&m)?);
        let (tx, tz) = split_targets(p, st)?;
        let next = DyadState {
            x: euler(&st.x, &tx, eta),
            z: euler(&st.z, &tz, eta),
        };
        Ok((next, energy))
    }

    fn delta(&self, old: &DyadState<T>, new: &DyadState<T>) -> T {
        new.x.distance(&old.x) + new.z.distance(&old.z)
    }

    fn mean_stress(&self, st: &DyadState<T>) -> (GlobalVector<T>, GlobalVector<T>) {
        (st.mean(), st.stress())
    }

    fn is_finite(&self, st: &DyadState<T>) -> bool {
        st.is_finite()
    }
}

type MeanStress<T> = (GlobalVector<T>, GlobalVector<T>);

struct MeanStressScheme<'a, T: Scalar>(Problem<'a, T>);

impl<T: Scalar> Scheme<T> for MeanStressScheme<'_, T> {
    type State = MeanStress<T>;

    fn init(&self) -> MeanStress<T> {
        (self.0.params.zeros(), self.0.params.zeros())
    }

    fn step(&self, (m, s): &MeanStress<T>, eta: T) -> Result<(MeanStress<T>, T)> {
        let p = &self.0;
        let local = p.local(m)?;
        let energy = p.energy_from(m, s, &local);
        let ts = p.backward(&local.slope, s)?.add(&local.grad);
        Ok(((euler(m, &local.activated, eta), euler(s, &ts, eta)), energy))
    }

    fn delta(&self, (m0, s0): &MeanStress<T>, (m1, s1): &MeanStress<T>) -> T {
        m1.distance(m0) + s1.distance(s0)
    }

    fn mean_stress(&self, st: &MeanStress<T>) -> MeanStress<T> {
        st.clone()
    }

    fn is_finite(&self, (m, s): &MeanStress<T>) -> bool {
        m.is_finite() && s.is_finite()
    }
}

/// Unit-step maps `m' = sigma(W m + beta)`, `s' = W^T D(m) s + g(m)`.
struct TwoLScheme<'a, T: Scalar>(Problem<'a, T>);

impl<T: Scalar> Scheme<T> for TwoLScheme<'_, T> {
    type State = MeanStress<T>;

    fn init(&self) -> MeanStress<T> {
        (self.0.params.zeros(), self.0.params.zeros())
    }

    fn step(&self, (m, s): &MeanStress<T>, _eta: T) -> Result<(MeanStress<T>, T)> {
        let p = &self.0;
        let local = p.local(m)?;
        let energy = p.energy_from(m, s, &local);
        let next_s = p.backward(&local.slope, s)?.add(&local.grad);
        Ok(((local.activated, next_s), energy))
    }

    fn delta(&self, (m0, s0): &MeanStress<T>, (m1, s1): &MeanStress<T>) -> T {
        m1.distance(m0) + s1.distance(s0)
    }

    fn mean_stress(&self, st: &MeanStress<T>) -> MeanStress<T> {
        st.clone()
    }

    fn is_finite(&self, (m, s): &MeanStress<T>) -> bool {
        m.is_finite() && s.is_finite()
    }
}

struct Run<S> {
    state: S,
    trace: RelaxTrace,
}

fn run<T: Scalar, S: Scheme<T>>(
    scheme: &S,
    mode: RelaxMode,
    eta: T,
    tol: Option<T>,
    k_max: usize,
) -> Result<Run<S::State>> {
    let mut state = scheme.init();
    let mut records = Vec::new();
    let mut converged = false;
    for k in 0..k_max {
        let (next, energy) = scheme.step(&state, eta)?;
        if !scheme.is_finite(&next) {
            return Err(Error::NonFinite("relaxation state"));
        }
        let delta = scheme.delta(&state, &next);
        let (_, s) = scheme.mean_stress(&next);
        records.push(TraceRecord {
            k,
            delta: delta.as_f64(),
            energy: energy.as_f64(),
            stress_norms: s.block_norms().into_iter().map(|v| v.as_f64()).collect(),
        });
        state = next;
        if let Some(tol) = tol {
            if delta < tol {
                converged = true;
                break;
            }
        }
    }
    if tol.is_none() {
        converged = true;
    }
    Ok(Run {
        state,
        trace: RelaxTrace {
            mode,
            iterations_used: records.len(),
            converged,
            records,
        },
    })
}

fn check_mode(cfg: &RelaxConfig, mode: RelaxMode) -> Result<()> {
    cfg.validate()?;
    if cfg.mode == mode {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "relaxation mode {} requested through the {mode} entry point",
            cfg.mode
        )))
    }
}

fn finish<T: Scalar, S: Scheme<T>>(
    scheme: &S,
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    run: Run<S::State>,
) -> Result<Relaxation<T>> {
    let (mean, stress) = scheme.mean_stress(&run.state);
    let gradient = gradient_from_equilibrium(params, input, &mean, &stress)?;
    if !run.trace.converged {
        log::debug!(
            "{} relaxation stopped at k_max = {} without meeting tolerance",
            run.trace.mode,
            run.trace.iterations_used
        );
    }
    Ok(Relaxation {
        mean,
        stress,
        gradient,
        trace: run.trace,
    })
}

/// Joint `(x, z)` Euler relaxation from `x = z = 0`.
pub fn relax_dyadic<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    cfg: &RelaxConfig,
) -> Result<Relaxation<T>> {
    check_mode(cfg, RelaxMode::Dyadic)?;
    let scheme = DyadicScheme(Problem::new(params, input, loss)?);
    let r = run(
        &scheme,
        RelaxMode::Dyadic,
        T::of(cfg.eta),
        Some(T::of(cfg.tol)),
        cfg.k_max,
    )?;
    finish(&scheme, params, input, r)
}

/// Euler relaxation of the mean/stress system from `m = s = 0`.
pub fn relax_mean_stress<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    cfg: &RelaxConfig,
) -> Result<Relaxation<T>> {
    check_mode(cfg, RelaxMode::MeanStress)?;
    let scheme = MeanStressScheme(Problem::new(params, input, loss)?);
    let r = run(
        &scheme,
        RelaxMode::MeanStress,
        T::of(cfg.eta),
        Some(T::of(cfg.tol)),
        cfg.k_max,
    )?;
    finish(&scheme, params, input, r)
}

/// Split-Jacobian `(x, z)` relaxation from `x = z = 0`.
pub fn relax_split<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    cfg: &RelaxConfig,
) -> Result<Relaxation<T>> {
    check_mode(cfg, RelaxMode::Split)?;
    let scheme = SplitScheme(Problem::new(params, input, loss)?);
    let r = run(
        &scheme,
        RelaxMode::Split,
        T::of(cfg.eta),
        Some(T::of(cfg.tol)),
        cfg.k_max,
    )?;
    finish(&scheme, params, input, r)
}

#[derive(Debug, Clone)]
pub struct TwoLResult<T> {
    pub mean: GlobalVector<T>,
    pub stress: GlobalVector<T>,
    pub gradient: GradientBundle<T>,
    pub trace: RelaxTrace,
}

/// Exactly `2L` unit steps of the mean/stress maps from `m = s = 0`; the
/// gradient is read off the final state.
pub fn relax_two_l<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
) -> Result<TwoLResult<T>> {
    let scheme = TwoLScheme(Problem::new(params, input, loss)?);
    let r = run(&scheme, RelaxMode::TwoL, T::one(), None, 2 * params.num_layers())?;
    let (mean, stress) = r.state;
    let gradient = gradient_from_equilibrium(params, input, &mean, &stress)?;
    Ok(TwoLResult {
        mean,
        stress,
        gradient,
        trace: r.trace,
    })
}

/// Dispatches on `cfg.mode`.
pub fn relax<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    cfg: &RelaxConfig,
) -> Result<Relaxation<T>> {
    match cfg.mode {
        RelaxMode::Dyadic => relax_dyadic(params, input, loss, cfg),
        RelaxMode::MeanStress => relax_mean_stress(params, input, loss, cfg),
        RelaxMode::Split => relax_split(params, input, loss, cfg),
        RelaxMode::TwoL => {
            let r = relax_two_l(params, input, loss)?;
            Ok(Relaxation {
                mean: r.mean,
                stress: r.stress,
                gradient: r.gradient,
                trace: r.trace,
            })
        }
    }
}

fn iterates<T: Scalar, S: Scheme<T>>(scheme: &S, eta: T, steps: usize) -> Result<Vec<S::State>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut state = scheme.init();
    out.push(state.clone());
    for _ in 0..steps {
        state = scheme.step(&state, eta)?.0;
        out.push(state.clone());
    }
    Ok(out)
}

/// States `k = 0..=steps` of the joint `(x, z)` relaxation.
pub fn dyadic_iterates<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    eta: T,
    steps: usize,
) -> Result<Vec<DyadState<T>>> {
    iterates(&DyadicScheme(Problem::new(params, input, loss)?), eta, steps)
}

/// States `k = 0..=steps` of the split relaxation.
pub fn split_iterates<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    eta: T,
    steps: usize,
) -> Result<Vec<DyadState<T>>> {
    iterates(&SplitScheme(Problem::new(params, input, loss)?), eta, steps)
}

/// `(m, s)` at `k = 0..=steps` of the mean/stress Euler relaxation.
pub fn mean_stress_iterates<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    eta: T,
    steps: usize,
) -> Result<Vec<(GlobalVector<T>, GlobalVector<T>)>> {
    iterates(&MeanStressScheme(Problem::new(params, input, loss)?), eta, steps)
}

/// `(m, s)` at `k = 0..=steps` of the unit-step maps.
pub fn two_l_iterates<T: Scalar>(
    params: &NetworkParams<T>,
    input: ArrayView1<'_, T>,
    loss: &dyn Loss<T>,
    steps: usize,
) -> Result<Vec<(GlobalVector<T>, GlobalVector<T>)>> {
    iterates(&TwoLScheme(Problem::new(params, input, loss)?), T::one(), steps)
}
