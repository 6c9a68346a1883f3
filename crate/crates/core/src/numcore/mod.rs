//! Dense numerical core: matrices, affine layers, activations, SGD and the
//! finite-difference gradient checker used to verify every analytic gradient.

mod activation;
mod gradcheck;
mod layers;
mod matrix;
mod optim;
mod params;
pub mod rng;

pub use activation::{relu, sigmoid, sigmoid_derivative, softplus, Activation};
pub use gradcheck::{grad_check, GradCheckReport, REL_ERROR_FLOOR};
pub use layers::{affine_backward, affine_forward, AffineGrads};
pub use matrix::{dot, l2_norm, Matrix};
pub use optim::{cosine_lr, sgd_step, SgdConfig, SgdState};
pub use params::{ParamSet, Segment};
