use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::net::{PolicyGrads, PolicyState, StepCache};
use super::sample::{encode_observation, sample_skeleton, SampleError, SampleRecord};
use crate::expr::{build_tree, Library, SamplerContext, StructureLimits};
use crate::optim::{rsco_batch, OptimConfig, RscoConfig};
use crate::problem::{Candidate, CollocationSet, ProblemSpec};

/// Training-loop hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub entropy_weight: f64,
    pub entropy_gamma: f64,
    pub risk_factor: f64,
    pub max_epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Stop once the best precise reward exceeds this; the default
    /// corresponds to a constraint error of 1e-6.
    pub early_stop_reward: f64,
    pub hidden: usize,
    pub limits: StructureLimits,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0010,
            entropy_weight: 0.07,
            entropy_gamma: 0.7,
            risk_factor: 0.05,
            max_epochs: 200,
            batch: 1000,
            seed: 0,
            early_stop_reward: 1.0 / (1.0 + 1e-6),
            hidden: 32,
            limits: StructureLimits::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("policy gradient came out non-finite; update aborted")]
pub struct NonFiniteGradient;

/// One row of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub best_reward: f64,
    pub mean_reward: f64,
    pub best_expression_infix: String,
    pub expressions_evaluated: usize,
    pub stage2_optimizations: usize,
    pub elapsed_seconds: f64,
}

/// Result of a single-problem training run.
#[derive(Debug, Clone)]
pub struct SsdeRun {
    pub best: Option<Candidate>,
    pub best_reward: f64,
    pub log: Vec<EpochRecord>,
    pub total_evaluations: usize,
    pub total_stage2: usize,
    /// Epoch at which the early-stop threshold was crossed, if it was.
    pub stopped_early_at: Option<usize>,
}

/// Rebuilds the per-step forward caches for a recorded traversal, reusing
/// the feasibility pattern stored at sample time (the mask is a constant of
/// the backward pass).
fn teacher_forced_forward(
    policy: &PolicyState,
    lib: &Library,
    record: &SampleRecord,
) -> (Vec<StepCache>, Vec<Vec<f64>>) {
    let mut ctx = SamplerContext::new();
    let mut state = policy.init_state();
    let mut caches = Vec::with_capacity(record.traversal.len());
    let mut masked = Vec::with_capacity(record.traversal.len());
    for (step, tok) in record.traversal.iter().enumerate() {
        let (p_tok, s_tok) = crate::expr::parent_sibling(&ctx);
        let x = encode_observation(
            lib.len(),
            p_tok.and_then(|t| lib.index_of(&t)),
            s_tok.and_then(|t| lib.index_of(&t)),
        );
        let (next, logits, cache) = policy.step(&state, &x);
        state = next;
        caches.push(cache);
        masked.push(masked_softmax(&logits, &record.masked_probs[step]));
        ctx.push(*tok);
    }
    (caches, masked)
}

/// Softmax over the feasible subset recorded at sample time.
fn masked_softmax(logits: &Array1<f64>, feasibility: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for (i, &z) in logits.iter().enumerate() {
        if feasibility[i] > 0.0 {
            m = m.max(z);
        }
    }
    let mut out = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for (i, &z) in logits.iter().enumerate() {
        if feasibility[i] > 0.0 {
            let e = (z - m).exp();
            out[i] = e;
            sum += e;
        }
    }
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Accumulates the risk-seeking objective gradient over the selected
/// records: `mean[(R - baseline) * grad log p] + lambda_H * mean[grad H]`.
pub fn compute_grads(
    policy: &PolicyState,
    lib: &Library,
    records: &[&SampleRecord],
    rewards: &[f64],
    baseline: f64,
    cfg: &TrainConfig,
) -> PolicyGrads {
    let mut grads = PolicyGrads::zeros(policy);
    let n = records.len() as f64;
    for (record, &reward) in records.iter().zip(rewards) {
        let advantage = reward - baseline;
        let (caches, masked) = teacher_forced_forward(policy, lib, record);
        let mut dlogits = Vec::with_capacity(caches.len());
        let mut discount = 1.0;
        for (step, probs) in masked.iter().enumerate() {
            let choice = record.choices[step];
            let entropy: f64 = probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum();
            let mut dz = Array1::zeros(probs.len());
            for (b, &p) in probs.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let d_logp = (if b == choice { 1.0 } else { 0.0 }) - p;
                let d_ent = -p * (p.ln() + entropy);
                dz[b] = (advantage * d_logp
                    + cfg.entropy_weight * discount * d_ent)
                    / n;
            }
            dlogits.push(dz);
            discount *= cfg.entropy_gamma;
        }
        policy.backward_sequence(&caches, &dlogits, &mut grads);
    }
    grads
}

/// The objective whose gradient the step ascends; used by gradient checks.
pub fn objective_value(
    policy: &PolicyState,
    lib: &Library,
    records: &[&SampleRecord],
    rewards: &[f64],
    baseline: f64,
    cfg: &TrainConfig,
) -> f64 {
    let n = records.len() as f64;
    let mut total = 0.0;
    for (record, &reward) in records.iter().zip(rewards) {
        let advantage = reward - baseline;
        let (_, masked) = teacher_forced_forward(policy, lib, record);
        let mut logp = 0.0;
        let mut h_hier = 0.0;
        let mut discount = 1.0;
        for (step, probs) in masked.iter().enumerate() {
            logp += probs[record.choices[step]].ln();
            let h: f64 = probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum();
            h_hier += discount * h;
            discount *= cfg.entropy_gamma;
        }
        total += advantage * logp + cfg.entropy_weight * h_hier;
    }
    total / n
}

/// One risk-seeking policy-gradient ascent step over the selected records.
/// A non-finite gradient aborts the update, leaving the parameters intact.
pub fn policy_gradient_step(
    policy: &mut PolicyState,
    lib: &Library,
    records: &[&SampleRecord],
    rewards: &[f64],
    baseline: f64,
    cfg: &TrainConfig,
) -> Result<(), NonFiniteGradient> {
    if records.is_empty() {
        return Ok(());
    }
    let grads = compute_grads(policy, lib, records, rewards, baseline, cfg);
    if !grads.is_finite() {
        return Err(NonFiniteGradient);
    }
    policy.apply_ascent(&grads, cfg.learning_rate);
    Ok(())
}

/// The single-problem training loop: sample a batch of skeletons, run the
/// two-stage constant-optimization schedule, update the policy from the
/// precise top-fraction rewards, and track the best candidate. Stops early
/// once the best reward clears the configured threshold. With `max_epochs`
/// of zero a single batch is evaluated without any policy update.
pub fn run_ssde(
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    tcfg: &TrainConfig,
    rcfg: &RscoConfig,
    ocfg: &OptimConfig,
    rsco: bool,
) -> Result<SsdeRun, SampleError> {
    let lib = spec.library.clone();
    let mut policy = PolicyState::new(lib.len(), tcfg.hidden, crate::optim::derive_seed(tcfg.seed, 7, 0));
    let mut rng = ChaCha20Rng::seed_from_u64(tcfg.seed);

    let mut best: Option<Candidate> = None;
    let mut best_reward = 0.0;
    let mut log = Vec::new();
    let mut total_evaluations = 0;
    let mut total_stage2 = 0;
    let mut stopped_early_at = None;

    let epochs = tcfg.max_epochs.max(1);
    for epoch in 1..=epochs {
        let t0 = std::time::Instant::now();
        let mut records = Vec::with_capacity(tcfg.batch);
        let mut skeletons = Vec::with_capacity(tcfg.batch);
        for _ in 0..tcfg.batch {
            let rec = sample_skeleton(&policy, &lib, &tcfg.limits, &mut rng)?;
            skeletons.push(build_tree(rec.traversal.clone()).expect("sampler output is complete"));
            records.push(rec);
        }

        let batch = rsco_batch(
            &skeletons,
            spec,
            colloc,
            rcfg,
            ocfg,
            crate::optim::derive_seed(tcfg.seed, 11, epoch as u64),
            rsco,
        );
        total_evaluations += skeletons.len();
        total_stage2 += batch.stage2_count;

        for (sel_pos, &j) in batch.selected.iter().enumerate() {
            let r = batch.precise_rewards[sel_pos];
            if r > best_reward || best.is_none() {
                best_reward = r;
                best = Some(batch.candidates[j].clone());
            }
        }

        if tcfg.max_epochs > 0 {
            let sel_records: Vec<&SampleRecord> =
                batch.selected.iter().map(|&j| &records[j]).collect();
            let _ = policy_gradient_step(
                &mut policy,
                &lib,
                &sel_records,
                &batch.precise_rewards,
                batch.precise_threshold,
                tcfg,
            );
        }

        let mean_reward =
            batch.cheap_rewards.iter().sum::<f64>() / batch.cheap_rewards.len() as f64;
        log.push(EpochRecord {
            epoch,
            best_reward,
            mean_reward,
            best_expression_infix: best.as_ref().map_or_else(|| "-".into(), |c| c.infix()),
            expressions_evaluated: skeletons.len(),
            stage2_optimizations: batch.stage2_count,
            elapsed_seconds: t0.elapsed().as_secs_f64(),
        });

        if best_reward > tcfg.early_stop_reward {
            stopped_early_at = Some(epoch);
            break;
        }
        if tcfg.max_epochs == 0 {
            break;
        }
    }

    Ok(SsdeRun {
        best,
        best_reward,
        log,
        total_evaluations,
        total_stage2,
        stopped_early_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{BinOp, Token, Var};
    use crate::policy::sample::log_prob_and_entropy;

    fn tiny_library() -> Library {
        Library::new(vec![
            Token::Bin(BinOp::Add),
            Token::Var(Var::X(1)),
            Token::Const,
        ])
        .unwrap()
    }

    fn sample_records(
        policy: &PolicyState,
        lib: &Library,
        limits: &StructureLimits,
        n: usize,
        seed: u64,
    ) -> Vec<SampleRecord> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| sample_skeleton(policy, lib, limits, &mut rng).unwrap())
            .collect()
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let lib = tiny_library();
        let mut policy = PolicyState::new(lib.len(), 4, 21);
        let limits = StructureLimits {
            min_len: 3,
            max_len: 12,
            max_const_slots: 6,
        };
        let records = sample_records(&policy, &lib, &limits, 3, 5);
        let refs: Vec<&SampleRecord> = records.iter().collect();
        let rewards = [0.9, 0.2, 0.55];
        let baseline = 0.2;
        let cfg = TrainConfig {
            entropy_weight: 0.07,
            entropy_gamma: 0.7,
            ..Default::default()
        };

        let grads = compute_grads(&policy, &lib, &refs, &rewards, baseline, &cfg).flatten();
        let theta = policy.flatten();
        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for (k, &g) in grads.iter().enumerate() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[k] += h;
            dn[k] -= h;
            policy.assign_flat(&up);
            let fu = objective_value(&policy, &lib, &refs, &rewards, baseline, &cfg);
            policy.assign_flat(&dn);
            let fd_val = objective_value(&policy, &lib, &refs, &rewards, baseline, &cfg);
            let fd = (fu - fd_val) / (2.0 * h);
            let rel = (fd - g).abs() / g.abs().max(1e-6);
            max_rel = max_rel.max(rel);
        }
        policy.assign_flat(&theta);
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel:.3e}");
    }

    #[test]
    fn positive_advantage_raises_sample_probability() {
        let lib = tiny_library();
        let mut policy = PolicyState::new(lib.len(), 8, 2);
        let limits = StructureLimits {
            min_len: 3,
            max_len: 12,
            max_const_slots: 6,
        };
        let records = sample_records(&policy, &lib, &limits, 1, 9);
        let refs: Vec<&SampleRecord> = records.iter().collect();
        let cfg = TrainConfig {
            entropy_weight: 0.0,
            learning_rate: 0.05,
            ..Default::default()
        };
        let before = objective_value(&policy, &lib, &refs, &[1.0], 0.0, &cfg);
        policy_gradient_step(&mut policy, &lib, &refs, &[1.0], 0.0, &cfg).unwrap();
        let after = objective_value(&policy, &lib, &refs, &[1.0], 0.0, &cfg);
        // With zero entropy weight the objective is exactly log p.
        assert!(after > before, "log p did not increase: {before} -> {after}");
    }

    #[test]
    fn zero_advantage_leaves_update_to_entropy() {
        let lib = tiny_library();
        let policy = PolicyState::new(lib.len(), 8, 2);
        let limits = StructureLimits::default();
        let records = sample_records(&policy, &lib, &limits, 2, 3);
        let refs: Vec<&SampleRecord> = records.iter().collect();
        let cfg_no_ent = TrainConfig {
            entropy_weight: 0.0,
            ..Default::default()
        };
        let grads = compute_grads(&policy, &lib, &refs, &[0.5, 0.5], 0.5, &cfg_no_ent);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
        let cfg_ent = TrainConfig {
            entropy_weight: 0.07,
            ..Default::default()
        };
        let grads = compute_grads(&policy, &lib, &refs, &[0.5, 0.5], 0.5, &cfg_ent);
        assert!(grads.flatten().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn recorded_entropy_matches_recomputed_forward() {
        let lib = Library::base();
        let policy = PolicyState::new(lib.len(), 16, 4);
        let limits = StructureLimits::default();
        let records = sample_records(&policy, &lib, &limits, 4, 8);
        for rec in &records {
            let (_, masked) = teacher_forced_forward(&policy, &lib, rec);
            for (stored, fresh) in rec.masked_probs.iter().zip(&masked) {
                for (a, b) in stored.iter().zip(fresh) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            let (logp, _) = log_prob_and_entropy(rec, 0.7);
            assert!((logp - rec.log_prob).abs() < 1e-10);
        }
    }
}
