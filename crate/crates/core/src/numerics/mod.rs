//! Dense `f64` arrays with tape-based reverse-mode differentiation, and the
//! neural primitives built on them.

mod conv;
pub mod gradcheck;
pub mod io;
mod linalg;
pub mod nn;
mod norm;
mod ops;
pub mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, rel_err};
pub use norm::{Mode, RunningStats, BN_EPS, BN_MOMENTUM, LN_EPS};
pub use ops::{concat, gelu_scalar, sigmoid_scalar, softplus_scalar};
pub use params::{Bound, Param, ParamKind, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
