//! Autoregressive skeleton generator (a gated recurrent cell conditioned on
//! parent/sibling context), risk-seeking policy-gradient training with
//! hierarchical entropy regularization, and the single-problem loop.

mod net;
mod sample;
mod train;

pub use net::{LstmState, PolicyGrads, PolicyState};
pub use sample::{encode_observation, log_prob_and_entropy, sample_skeleton, SampleError, SampleRecord};
pub use train::{
    compute_grads, objective_value, policy_gradient_step, run_ssde, EpochRecord,
    NonFiniteGradient, SsdeRun, TrainConfig,
};
