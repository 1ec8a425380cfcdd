//! Discovery of closed-form symbolic solutions to ordinary and partial
//! differential equations by policy-gradient search over expression trees,
//! with physics-regularized rewards, two-stage risk-seeking constant
//! optimization, and recursive per-dimension exploration for
//! high-dimensional PDEs.

pub mod diffeval;
pub mod expr;
pub mod optim;
pub mod policy;
pub mod problem;
