use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::bfgs::{bfgs_minimize, Objective, OptimConfig, OptimError};
use crate::expr::ExpressionTree;
use crate::problem::{reward, Candidate, CollocationSet, LossFn, LossKind, LossWeights, ProblemSpec};

/// Risk-seeking constant-optimization schedule parameters.
#[derive(Debug, Clone, Copy)]
pub struct RscoConfig {
    pub epsilon: f64,
    pub batch: usize,
}

impl Default for RscoConfig {
    fn default() -> Self {
        RscoConfig {
            epsilon: 0.05,
            batch: 1000,
        }
    }
}

impl RscoConfig {
    pub fn validate(&self) {
        assert!(self.epsilon > 0.0 && self.epsilon < 1.0, "epsilon in (0,1)");
        assert!(
            self.epsilon * self.batch as f64 >= 1.0,
            "epsilon * batch must be at least 1"
        );
    }

    pub fn selected_count(&self) -> usize {
        quantile_count(self.batch, self.epsilon)
    }
}

fn quantile_count(n: usize, eps: f64) -> usize {
    ((eps * n as f64).ceil() as usize).clamp(1, n)
}

/// The (1-eps)-quantile of a reward batch: sort descending, take the value
/// at index `ceil(eps*N) - 1`.
pub fn quantile_threshold(rewards: &[f64], eps: f64) -> f64 {
    assert!(!rewards.is_empty());
    let k = quantile_count(rewards.len(), eps);
    let mut sorted: Vec<f64> = rewards.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("rewards are finite"));
    sorted[k - 1]
}

/// Indices of the exactly `ceil(eps*N)` best rewards, ordered by descending
/// reward with ties broken by lower index.
pub fn select_top(rewards: &[f64], eps: f64) -> Vec<usize> {
    let k = quantile_count(rewards.len(), eps);
    let mut order: Vec<usize> = (0..rewards.len()).collect();
    order.sort_by(|&a, &b| {
        rewards[b]
            .partial_cmp(&rewards[a])
            .expect("rewards are finite")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Outcome of one RSCO pass over a batch of sampled skeletons.
#[derive(Debug, Clone)]
pub struct RscoBatch {
    /// All candidates with the constants from their latest fit stage.
    pub candidates: Vec<Candidate>,
    /// Stage-1 rewards for the whole batch.
    pub cheap_rewards: Vec<f64>,
    /// Indices of the retained top fraction, descending by cheap reward.
    pub selected: Vec<usize>,
    /// Precise rewards aligned with `selected`.
    pub precise_rewards: Vec<f64>,
    /// Baseline for the policy gradient: the minimum precise reward among
    /// the selected candidates.
    pub precise_threshold: f64,
    /// Number of full-loss constant optimizations this batch performed.
    pub stage2_count: usize,
}

struct LossObjective<'a> {
    f: LossFn,
    spec: &'a ProblemSpec,
    colloc: &'a CollocationSet,
}

impl Objective for LossObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.f.value(self.spec, self.colloc, x)
    }
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.f.value_grad(self.spec, self.colloc, x)
    }
}

/// Fits a candidate's constants against the selected loss with analytic
/// gradients. Zero-slot candidates return unchanged; a candidate whose loss
/// is non-finite at every start is reported as an error so the caller can
/// zero its reward.
pub fn optimize_constants(
    candidate: &Candidate,
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    kind: LossKind,
    cfg: &OptimConfig,
    seed: u64,
) -> Result<Candidate, OptimError> {
    let k = candidate.tree.n_slots();
    if k == 0 {
        return Ok(candidate.clone());
    }
    let obj = LossObjective {
        f: LossFn::new(&candidate.tree, spec, kind, LossWeights::default()),
        spec,
        colloc,
    };
    let x0: Vec<f64> = if candidate.consts.len() == k && candidate.consts.iter().all(|c| c.is_finite()) {
        candidate.consts.clone()
    } else {
        vec![cfg.init_const; k]
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (consts, _) = bfgs_minimize(&obj, &x0, cfg, &mut rng)?;
    Ok(Candidate::new(candidate.tree.clone(), consts))
}

/// Derives a per-candidate seed so parallel schedules stay reproducible.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master ^ stream.rotate_left(17) ^ index.rotate_left(41);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Two-stage risk-seeking constant optimization over a sampled batch.
///
/// Stage 1 fits every skeleton against the deterministic conditions only and
/// scores it with the squashed full-constraint reward. Stage 2 re-fits the
/// top fraction against the full physics-regularized loss, warm-started from
/// the stage-1 constants, and recomputes their rewards. With `rsco` disabled
/// every skeleton gets the full-loss fit up front.
pub fn rsco_batch(
    skeletons: &[ExpressionTree],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    rcfg: &RscoConfig,
    ocfg: &OptimConfig,
    seed: u64,
    rsco: bool,
) -> RscoBatch {
    let stage1_kind = if rsco { LossKind::Bi } else { LossKind::Full };

    let stage1: Vec<(Candidate, f64)> = skeletons
        .par_iter()
        .enumerate()
        .map(|(j, tree)| {
            let init = Candidate::new(tree.clone(), vec![ocfg.init_const; tree.n_slots()]);
            match optimize_constants(&init, spec, colloc, stage1_kind, ocfg, derive_seed(seed, 1, j as u64)) {
                Ok(cand) => {
                    let r = reward(&cand, spec, colloc);
                    (cand, r)
                }
                Err(_) => (init, 0.0),
            }
        })
        .collect();

    let mut candidates: Vec<Candidate> = Vec::with_capacity(stage1.len());
    let mut cheap_rewards: Vec<f64> = Vec::with_capacity(stage1.len());
    for (c, r) in stage1 {
        candidates.push(c);
        cheap_rewards.push(r);
    }

    let selected = select_top(&cheap_rewards, rcfg.epsilon);

    let (precise_rewards, stage2_count) = if rsco {
        let refits: Vec<(usize, Candidate, f64)> = selected
            .par_iter()
            .map(|&j| {
                match optimize_constants(
                    &candidates[j],
                    spec,
                    colloc,
                    LossKind::Full,
                    ocfg,
                    derive_seed(seed, 2, j as u64),
                ) {
                    Ok(cand) => {
                        let r = reward(&cand, spec, colloc);
                        (j, cand, r)
                    }
                    Err(_) => (j, candidates[j].clone(), 0.0),
                }
            })
            .collect();
        let mut precise = Vec::with_capacity(selected.len());
        for (j, cand, r) in refits {
            candidates[j] = cand;
            precise.push(r);
        }
        (precise, selected.len())
    } else {
        // Stage 1 already used the full loss; its rewards are precise.
        let precise = selected.iter().map(|&j| cheap_rewards[j]).collect();
        (precise, skeletons.len())
    };

    let precise_threshold = precise_rewards
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    RscoBatch {
        candidates,
        cheap_rewards,
        selected,
        precise_rewards,
        precise_threshold,
        stage2_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_descending_rule() {
        let rewards: Vec<f64> = (0..10).map(|i| 0.9 - 0.1 * i as f64).collect();
        assert!((quantile_threshold(&rewards, 0.2) - 0.8).abs() < 1e-12);
        assert_eq!(select_top(&rewards, 0.2), vec![0, 1]);
    }

    #[test]
    fn ties_break_by_lower_index() {
        let rewards = vec![0.5; 8];
        let sel = select_top(&rewards, 0.25);
        assert_eq!(sel, vec![0, 1]);
        assert_eq!(quantile_threshold(&rewards, 0.25), 0.5);
    }

    #[test]
    fn selected_count_is_exact() {
        let cfg = RscoConfig {
            epsilon: 0.05,
            batch: 1000,
        };
        assert_eq!(cfg.selected_count(), 50);
        let rewards: Vec<f64> = (0..1000).map(|i| (i as f64) / 1000.0).collect();
        assert_eq!(select_top(&rewards, 0.05).len(), 50);
    }
}
