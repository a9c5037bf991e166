//! Dense networks with a hand-written reverse pass, finite-difference
//! Hessians built from forward evaluations, and first/quasi-second order
//! optimizers.

mod checkpoint;
mod hessian;
mod net;
mod optim;

pub use checkpoint::{Bundle, BUNDLE_VERSION};
pub use hessian::{frobenius_sq, hessian_input, Hessian3, HessianStencil, STENCIL_SIZE};
pub use net::{Activation, DenseNet, FourierSpec, NetSpec, Tape};
pub use optim::{lbfgs, AdamState, LbfgsOptions, LbfgsReport};
