//! Dense tensors, tape-based reverse-mode AD, Gaussian utilities and Adam.

mod adam;
mod gaussian;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamState};
pub use gaussian::{
    argmax, kl_diag, reparam_sample, softmax, softmax_cross_entropy, GaussianDiag, LOGVAR_MAX,
    LOGVAR_MIN,
};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport, ParamCheck};
pub use params::{Bound, ParamEntry, ParamGroup, ParamId, ParamSet};
pub use tape::{sigmoid, Activation, GaussianVar, Gradients, Tape, Var};
pub use tensor::Tensor;
