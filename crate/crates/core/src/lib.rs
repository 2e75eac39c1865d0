//! Exact network gradients from the finite-time relaxation of a doubled-state
//! saddle-point flow, together with the oracles and metrics used to check them.
//!
//! - [`net`]: chain networks, stacked states and the block-triangular weight operator
//! - [`reference`]: backpropagation, finite differences and the Neumann closed form
//! - [`dynamics`]: energy, saddle/mean-stress/split flows and their Euler relaxations
//! - [`fidelity`]: cosine, relative error, norm ratio, SNR and per-layer misalignment
//! - [`harness`]: datasets, configuration, training and the experiment drivers

pub mod csvout;
pub mod dynamics;
pub mod error;
pub mod fidelity;
pub mod gradient;
pub mod harness;
pub mod loss;
pub mod net;
pub mod reference;
pub mod scalar;

pub use dynamics::{DyadState, RelaxConfig, RelaxMode, RelaxTrace, Relaxation};
pub use error::{Error, Result};
pub use fidelity::{compare, log_misalignment, FidelityReport};
pub use gradient::GradientBundle;
pub use loss::{Loss, LossKind, LossSpec};
pub use net::{Activation, GlobalVector, Layer, LayerSpec, NetworkParams};
pub use reference::{classical_backprop, finite_difference_grad, neumann_stress};
pub use scalar::{Precision, Scalar};
