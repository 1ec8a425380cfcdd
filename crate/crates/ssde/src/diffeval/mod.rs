//! Batched evaluation of expression trees, exact symbolic differentiation,
//! and gradients with respect to constants.

mod dag;
mod derive;
mod dual;
mod eval;
mod grad;

pub use dag::Dag;
pub use derive::differentiate;
pub use dual::{Dual, Num};
pub use eval::{evaluate, evaluate_bound, evaluate_dual, Bindings, ConstVal, DualTarget, EvalError, EvalResult, PointBatch};
pub use grad::{grad_constants, GradResult};
