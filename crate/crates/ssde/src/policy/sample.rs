use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::net::PolicyState;
use crate::expr::{
    apply_constraints, build_tree, parent_sibling, Library, SamplerContext, StructureLimits, Token,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("sampling abandoned 10 consecutive times: no feasible token")]
    ResampleExhausted,
}

/// One sampled skeleton with everything the trainer needs to reproduce its
/// probability: the masked distribution and chosen index at every step.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub traversal: Vec<Token>,
    pub choices: Vec<usize>,
    pub masked_probs: Vec<Vec<f64>>,
    pub log_prob: f64,
}

/// Position-discounted entropy and exact log-probability of a record.
///
/// `H_hier = sum_i gamma^(i-1) * H[p_i]` with natural-log Shannon entropy of
/// the masked per-step distribution; the entropy weight is applied by the
/// trainer, not here.
pub fn log_prob_and_entropy(record: &SampleRecord, gamma: f64) -> (f64, f64) {
    let mut logp = 0.0;
    let mut h_hier = 0.0;
    let mut discount = 1.0;
    for (probs, &choice) in record.masked_probs.iter().zip(&record.choices) {
        logp += probs[choice].ln();
        let h: f64 = probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum();
        h_hier += discount * h;
        discount *= gamma;
    }
    (logp, h_hier)
}

fn softmax(logits: &Array1<f64>) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One-hot parent and sibling with an extra empty slot each.
pub fn encode_observation(
    n_tokens: usize,
    parent: Option<usize>,
    sibling: Option<usize>,
) -> Array1<f64> {
    let mut x = Array1::zeros(2 * (n_tokens + 1));
    x[parent.unwrap_or(n_tokens)] = 1.0;
    x[n_tokens + 1 + sibling.unwrap_or(n_tokens)] = 1.0;
    x
}

fn draw_categorical(probs: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_feasible = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_feasible = i;
            cum += p;
            if u < cum {
                return i;
            }
        }
    }
    last_feasible
}

/// Samples one skeleton autoregressively: emit logits, mask infeasible
/// tokens, draw, update the traversal counter and parent/sibling
/// observation; the loop ends when the counter reaches zero. A sample that
/// runs out of feasible tokens is abandoned and retried.
pub fn sample_skeleton(
    policy: &PolicyState,
    lib: &Library,
    limits: &StructureLimits,
    rng: &mut ChaCha20Rng,
) -> Result<SampleRecord, SampleError> {
    'attempt: for _ in 0..10 {
        let mut ctx = SamplerContext::new();
        let mut state = policy.init_state();
        let mut record = SampleRecord {
            traversal: Vec::new(),
            choices: Vec::new(),
            masked_probs: Vec::new(),
            log_prob: 0.0,
        };
        while !ctx.is_complete() {
            let (p_tok, s_tok) = parent_sibling(&ctx);
            let x = encode_observation(
                lib.len(),
                p_tok.and_then(|t| lib.index_of(&t)),
                s_tok.and_then(|t| lib.index_of(&t)),
            );
            let (next_state, logits, _) = policy.step(&state, &x);
            state = next_state;
            let probs = softmax(&logits);
            let masked = match apply_constraints(&probs, lib.tokens(), &ctx, limits) {
                Ok(m) => m,
                Err(_) => continue 'attempt,
            };
            let choice = draw_categorical(&masked, rng);
            let tok = lib.get(choice).expect("index in range");
            record.log_prob += masked[choice].ln();
            record.choices.push(choice);
            record.masked_probs.push(masked);
            record.traversal.push(tok);
            ctx.push(tok);
        }
        debug_assert!(build_tree(record.traversal.clone()).is_ok());
        return Ok(record);
    }
    Err(SampleError::ResampleExhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sampled_traversals_build() {
        let lib = Library::base();
        let policy = PolicyState::new(lib.len(), 16, 3);
        let limits = StructureLimits::default();
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..200 {
            let rec = sample_skeleton(&policy, &lib, &limits, &mut rng).unwrap();
            assert!(build_tree(rec.traversal.clone()).is_ok());
            assert!(rec.traversal.len() >= limits.min_len);
            assert!(rec.traversal.len() <= limits.max_len);
        }
    }

    #[test]
    fn fixed_seed_reproduces_traversal() {
        let lib = Library::base();
        let policy = PolicyState::new(lib.len(), 16, 3);
        let limits = StructureLimits::default();
        let a = sample_skeleton(&policy, &lib, &limits, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        let b = sample_skeleton(&policy, &lib, &limits, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.traversal, b.traversal);
        assert_eq!(a.log_prob, b.log_prob);
    }

    #[test]
    fn entropy_of_uniform_feasible_steps() {
        // Three steps of a uniform 10-way distribution at gamma = 0.7.
        let rec = SampleRecord {
            traversal: vec![],
            choices: vec![0, 0, 0],
            masked_probs: vec![vec![0.1; 10]; 3],
            log_prob: 3.0 * (0.1f64).ln(),
        };
        let (logp, h) = log_prob_and_entropy(&rec, 0.7);
        assert!((logp - 3.0 * (0.1f64).ln()).abs() < 1e-12);
        let expect = (1.0 + 0.7 + 0.49) * (10.0f64).ln();
        assert!((h - expect).abs() < 1e-12);
    }

    #[test]
    fn deterministic_distributions_have_zero_entropy() {
        let mut probs = vec![0.0; 5];
        probs[2] = 1.0;
        let rec = SampleRecord {
            traversal: vec![],
            choices: vec![2],
            masked_probs: vec![probs],
            log_prob: 0.0,
        };
        let (logp, h) = log_prob_and_entropy(&rec, 0.7);
        assert_eq!(h, 0.0);
        assert_eq!(logp, 0.0);
    }

    #[test]
    fn single_step_log_prob() {
        let mut probs = vec![0.25; 4];
        probs.iter_mut().for_each(|p| *p = 0.25);
        let rec = SampleRecord {
            traversal: vec![],
            choices: vec![1],
            masked_probs: vec![probs],
            log_prob: (0.25f64).ln(),
        };
        let (logp, _) = log_prob_and_entropy(&rec, 0.7);
        assert!((logp - (0.25f64).ln()).abs() < 1e-15);
    }
}
