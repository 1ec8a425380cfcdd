//! Differential-equation problem definitions, collocation sampling,
//! residual/loss/reward computation, and the evaluation metrics.

mod builtin;
mod colloc;
mod loss;
mod residual;
mod spec;

pub use builtin::{builtin, BUILTIN_PROBLEMS, GAMMA_NAMES, HD_NAMES};
pub use colloc::{dense_points, sample_collocation, sample_uniform, CollocationSet, DEFAULT_COUNTS};
pub use loss::{
    constraint_mses, loss_bi, loss_full, metric_lphy, metric_rel_l2, mse_vs_truth, residual_values,
    reward, Candidate, InvalidCandidate, LossFn, LossKind, LossWeights,
};
pub use residual::{DerivKind, ResTok, ResidualError, ResidualExpr, ResidualKit};
pub use spec::{ProblemSpec, SpecError};

/// Recovery test: re-optimize the candidate's constants on the full
/// physics-regularized loss, then accept iff the mean squared error against
/// the ground truth over the dense point set is below 1e-8.
pub fn recovery_check(
    candidate: &Candidate,
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    dense_pts: &crate::diffeval::PointBatch,
) -> bool {
    let cfg = crate::optim::OptimConfig::default();
    let refit = crate::optim::optimize_constants(
        candidate,
        spec,
        colloc,
        LossKind::Full,
        &cfg,
        0x5EED_F17,
    )
    .unwrap_or_else(|_| candidate.clone());
    match mse_vs_truth(&refit, spec, dense_pts) {
        Some(m) => m < 1e-8,
        None => false,
    }
}
