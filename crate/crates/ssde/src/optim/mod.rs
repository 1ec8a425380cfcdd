//! Quasi-Newton constant optimization and the two-stage risk-seeking
//! constant optimization schedule.

mod bfgs;
mod rsco;

pub use bfgs::{bfgs_minimize, Objective, OptimConfig, OptimError};
pub use rsco::{
    derive_seed, optimize_constants, quantile_threshold, rsco_batch, select_top, RscoBatch,
    RscoConfig,
};
