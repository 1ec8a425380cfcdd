use thiserror::Error;

use super::colloc::CollocationSet;
use super::residual::ResidualKit;
use super::spec::ProblemSpec;
use crate::diffeval::{evaluate, evaluate_dual, Bindings, DualTarget, EvalResult, PointBatch};
use crate::expr::ExpressionTree;

/// Relative weights of the PDE, boundary, and initial loss terms.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub pde: f64,
    pub bc: f64,
    pub ic: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pde: 1.0,
            bc: 1.0,
            ic: 1.0,
        }
    }
}

/// A skeleton with its constants filled in.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub tree: ExpressionTree,
    pub consts: Vec<f64>,
}

impl Candidate {
    pub fn new(tree: ExpressionTree, consts: Vec<f64>) -> Candidate {
        assert_eq!(tree.n_slots(), consts.len());
        Candidate { tree, consts }
    }

    pub fn infix(&self) -> String {
        crate::expr::to_infix(&self.tree, &self.consts)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("candidate is non-finite on the collocation set")]
pub struct InvalidCandidate;

/// Which constraint terms a constant fit minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// PDE residual plus boundary/initial terms.
    Full,
    /// Boundary/initial terms only.
    Bi,
}

/// Residual of the differential operator applied to a candidate, evaluated
/// pointwise. A candidate that is itself non-finite somewhere on the batch,
/// or whose residual is non-finite everywhere, is invalid.
pub fn residual_values(
    candidate: &Candidate,
    spec: &ProblemSpec,
    pts: &PointBatch,
) -> Result<EvalResult, InvalidCandidate> {
    let bind = Bindings::Scalar(&candidate.consts);
    let u = evaluate(&candidate.tree, pts, &candidate.consts).map_err(|_| InvalidCandidate)?;
    if !u.all_finite() {
        return Err(InvalidCandidate);
    }
    let kit = ResidualKit::new(&candidate.tree, &spec.residual);
    let values = kit
        .eval(&spec.residual, pts, &bind)
        .map_err(|_| InvalidCandidate)?;
    let r = EvalResult::from_values(values);
    if !r.any_finite() {
        return Err(InvalidCandidate);
    }
    Ok(r)
}

fn mse(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    values.iter().map(|v| v * v).sum::<f64>() / n
}

fn mse_against(values: &[f64], targets: &[f64]) -> f64 {
    let n = values.len() as f64;
    values
        .iter()
        .zip(targets)
        .map(|(v, t)| (v - t) * (v - t))
        .sum::<f64>()
        / n
}

/// The applicable constraint MSE terms for a candidate, or `None` when any
/// collocation point evaluates non-finite.
///
/// Order: `[MSE_F, MSE_B, MSE_I]`, with `MSE_I` absent for time-independent
/// problems.
pub fn constraint_mses(
    candidate: &Candidate,
    spec: &ProblemSpec,
    colloc: &CollocationSet,
) -> Option<Vec<f64>> {
    let bind = Bindings::Scalar(&candidate.consts);
    let kit = ResidualKit::new(&candidate.tree, &spec.residual);
    let res = kit.eval(&spec.residual, &colloc.interior, &bind).ok()?;
    if res.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut terms = vec![mse(&res)];

    let ub = evaluate(&candidate.tree, &colloc.boundary, &candidate.consts).ok()?;
    if !ub.all_finite() {
        return None;
    }
    terms.push(mse_against(&ub.values, &colloc.boundary_targets));

    if let Some((pts, targets)) = &colloc.initial {
        let ui = evaluate(&candidate.tree, pts, &candidate.consts).ok()?;
        if !ui.all_finite() {
            return None;
        }
        terms.push(mse_against(&ui.values, targets));
    }
    Some(terms)
}

/// Physics-regularized loss: `λ0·MSE_F + λ1·MSE_B + λ2·MSE_I`, the initial
/// term omitted for time-independent problems. Invalid candidates map to
/// `+inf`.
pub fn loss_full(
    candidate: &Candidate,
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    w: &LossWeights,
) -> f64 {
    match constraint_mses(candidate, spec, colloc) {
        None => f64::INFINITY,
        Some(terms) => {
            let mut loss = w.pde * terms[0] + w.bc * terms[1];
            if let Some(mi) = terms.get(2) {
                loss += w.ic * mi;
            }
            loss
        }
    }
}

/// Deterministic-conditions loss: boundary and initial terms only.
pub fn loss_bi(
    candidate: &Candidate,
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    w: &LossWeights,
) -> f64 {
    let f = LossFn::new(&candidate.tree, spec, LossKind::Bi, *w);
    f.value(spec, colloc, &candidate.consts)
}

/// Mean of the applicable root-mean-square constraint errors.
fn rmse_average(candidate: &Candidate, spec: &ProblemSpec, colloc: &CollocationSet) -> Option<f64> {
    let terms = constraint_mses(candidate, spec, colloc)?;
    let avg = terms.iter().map(|m| m.sqrt()).sum::<f64>() / terms.len() as f64;
    avg.is_finite().then_some(avg)
}

/// Squashed constraint error in `[0, 1]`: `R = 1 / (1 + A)` where `A`
/// averages the applicable RMSE terms. Non-finite candidates get 0.
pub fn reward(candidate: &Candidate, spec: &ProblemSpec, colloc: &CollocationSet) -> f64 {
    match rmse_average(candidate, spec, colloc) {
        Some(a) => 1.0 / (1.0 + a),
        None => 0.0,
    }
}

/// The physical-consistency metric: the same RMSE average the reward
/// squashes. `+inf` for invalid candidates.
pub fn metric_lphy(candidate: &Candidate, spec: &ProblemSpec, colloc: &CollocationSet) -> f64 {
    rmse_average(candidate, spec, colloc).unwrap_or(f64::INFINITY)
}

/// Mean relative L2 error against the ground truth over test points,
/// excluding points where the truth vanishes (|y| <= 1e-12). `None` when the
/// problem has no recorded ground truth.
pub fn metric_rel_l2(
    candidate: &Candidate,
    spec: &ProblemSpec,
    test_pts: &PointBatch,
) -> Option<f64> {
    let truth = spec.ground_truth.as_ref()?;
    let yt = evaluate(truth, test_pts, &[]).ok()?.values;
    let yp = match evaluate(&candidate.tree, test_pts, &candidate.consts) {
        Ok(r) => r.values,
        Err(_) => return Some(f64::INFINITY),
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, p) in yt.iter().zip(&yp) {
        if t.abs() <= 1e-12 {
            continue;
        }
        sum += (t - p).abs() / t.abs();
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Mean squared error between a candidate and the ground truth over a point
/// set; `+inf` when the candidate is non-finite somewhere.
pub fn mse_vs_truth(candidate: &Candidate, spec: &ProblemSpec, pts: &PointBatch) -> Option<f64> {
    let truth = spec.ground_truth.as_ref()?;
    let yt = evaluate(truth, pts, &[]).ok()?.values;
    let yp = match evaluate(&candidate.tree, pts, &candidate.consts) {
        Ok(r) if r.all_finite() => r.values,
        _ => return Some(f64::INFINITY),
    };
    Some(mse_against(&yp, &yt))
}

/// A reusable objective for constant optimization: holds the candidate's
/// derivative trees so repeated evaluations only redo arithmetic.
pub struct LossFn {
    weights: LossWeights,
    tree: ExpressionTree,
    kit: Option<ResidualKit>,
}

impl LossFn {
    pub fn new(tree: &ExpressionTree, spec: &ProblemSpec, kind: LossKind, weights: LossWeights) -> LossFn {
        let kit = match kind {
            LossKind::Full if weights.pde != 0.0 => Some(ResidualKit::new(tree, &spec.residual)),
            _ => None,
        };
        LossFn {
            weights,
            tree: tree.clone(),
            kit,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.tree.n_slots()
    }

    pub fn value(&self, spec: &ProblemSpec, colloc: &CollocationSet, consts: &[f64]) -> f64 {
        let bind = Bindings::Scalar(consts);
        let mut loss = 0.0;

        if let Some(kit) = &self.kit {
            match kit.eval(&spec.residual, &colloc.interior, &bind) {
                Ok(r) if r.iter().all(|v| v.is_finite()) => {
                    loss += self.weights.pde * mse(&r);
                }
                _ => return f64::INFINITY,
            }
        }

        match evaluate(&self.tree, &colloc.boundary, consts) {
            Ok(r) if r.all_finite() => {
                loss += self.weights.bc * mse_against(&r.values, &colloc.boundary_targets);
            }
            _ => return f64::INFINITY,
        }

        if let Some((pts, targets)) = &colloc.initial {
            match evaluate(&self.tree, pts, consts) {
                Ok(r) if r.all_finite() => {
                    loss += self.weights.ic * mse_against(&r.values, targets);
                }
                _ => return f64::INFINITY,
            }
        }
        loss
    }

    /// Loss value and its analytic gradient with respect to the constants.
    pub fn value_grad(
        &self,
        spec: &ProblemSpec,
        colloc: &CollocationSet,
        consts: &[f64],
    ) -> (f64, Vec<f64>) {
        let k = consts.len();
        let bind = Bindings::Scalar(consts);
        let mut loss = 0.0;
        let mut grad = vec![0.0; k];
        let bad = || (f64::INFINITY, vec![f64::NAN; k]);

        if let Some(kit) = &self.kit {
            for slot in 0..k.max(1) {
                if slot >= k {
                    // Constant-free candidate: value only.
                    match kit.eval(&spec.residual, &colloc.interior, &bind) {
                        Ok(r) if r.iter().all(|v| v.is_finite()) => {
                            loss += self.weights.pde * mse(&r)
                        }
                        _ => return bad(),
                    }
                    break;
                }
                let (vals, dots) = match kit.eval_dual(
                    &spec.residual,
                    &colloc.interior,
                    &bind,
                    DualTarget::Slot(slot),
                ) {
                    Ok(vd) => vd,
                    Err(_) => return bad(),
                };
                if vals.iter().any(|v| !v.is_finite()) || dots.iter().any(|d| !d.is_finite()) {
                    return bad();
                }
                let n = vals.len() as f64;
                if slot == 0 {
                    loss += self.weights.pde * mse(&vals);
                }
                grad[slot] += self.weights.pde * 2.0 / n
                    * vals.iter().zip(&dots).map(|(r, d)| r * d).sum::<f64>();
            }
        }

        let fit_term = |pts: &PointBatch, targets: &[f64], weight: f64,
                            loss: &mut f64, grad: &mut Vec<f64>|
         -> bool {
            for slot in 0..k.max(1) {
                if slot >= k {
                    match evaluate(&self.tree, pts, consts) {
                        Ok(r) if r.all_finite() => {
                            *loss += weight * mse_against(&r.values, targets)
                        }
                        _ => return false,
                    }
                    break;
                }
                let (vals, dots) =
                    match evaluate_dual(&self.tree, pts, &bind, DualTarget::Slot(slot)) {
                        Ok(vd) => vd,
                        Err(_) => return false,
                    };
                if vals.iter().any(|v| !v.is_finite()) || dots.iter().any(|d| !d.is_finite()) {
                    return false;
                }
                let n = vals.len() as f64;
                if slot == 0 {
                    *loss += weight * mse_against(&vals, targets);
                }
                grad[slot] += weight * 2.0 / n
                    * vals
                        .iter()
                        .zip(targets)
                        .zip(&dots)
                        .map(|((v, t), d)| (v - t) * d)
                        .sum::<f64>();
            }
            true
        };

        if !fit_term(
            &colloc.boundary,
            &colloc.boundary_targets,
            self.weights.bc,
            &mut loss,
            &mut grad,
        ) {
            return bad();
        }
        if let Some((pts, targets)) = &colloc.initial {
            if !fit_term(pts, targets, self.weights.ic, &mut loss, &mut grad) {
                return bad();
            }
        }
        (loss, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_prefix;
    use crate::problem::colloc::sample_collocation;

    fn gamma1() -> ProblemSpec {
        ProblemSpec::parse(
            "\
name gamma01
variables x1
domain x1 -1 1
library add sub mul div sin cos exp log x1 c
residual sub u_x1x1 add mul 6 x1 2
boundary_target add add mul x1 mul x1 x1 mul x1 x1 x1
ground_truth add add mul x1 mul x1 x1 mul x1 x1 x1
",
        )
        .unwrap()
    }

    fn truth_candidate(spec: &ProblemSpec) -> Candidate {
        Candidate::new(spec.ground_truth.clone().unwrap(), vec![])
    }

    #[test]
    fn exact_solution_has_zero_loss_and_unit_reward() {
        let spec = gamma1();
        let colloc = sample_collocation(&spec, (128, 32, 0), 11);
        let cand = truth_candidate(&spec);
        let w = LossWeights::default();
        assert!(loss_full(&cand, &spec, &colloc, &w) < 1e-12);
        assert!(loss_bi(&cand, &spec, &colloc, &w) < 1e-24);
        let r = reward(&cand, &spec, &colloc);
        assert!(r > 1.0 - 1e-9);
        let l = metric_lphy(&cand, &spec, &colloc);
        assert_eq!(r, 1.0 / (1.0 + l));
    }

    #[test]
    fn zero_candidate_matches_brute_force() {
        let spec = gamma1();
        let colloc = sample_collocation(&spec, (64, 16, 0), 3);
        let lib = &spec.library;
        let zero = Candidate::new(parse_prefix("mul 0 x1", lib).unwrap(), vec![]);
        // Brute force: residual of u == 0 is -(6x+2); boundary misses the
        // cubic targets entirely.
        let xs = colloc.interior.get(crate::expr::Var::X(1)).unwrap();
        let mse_f_expect =
            xs.iter().map(|x| (6.0 * x + 2.0) * (6.0 * x + 2.0)).sum::<f64>() / xs.len() as f64;
        let mse_b_expect = colloc
            .boundary_targets
            .iter()
            .map(|t| t * t)
            .sum::<f64>()
            / colloc.boundary_targets.len() as f64;
        let w = LossWeights::default();
        let got = loss_full(&zero, &spec, &colloc, &w);
        assert!((got - (mse_f_expect + mse_b_expect)).abs() < 1e-10 * got);
        let bi = loss_bi(&zero, &spec, &colloc, &w);
        assert!((bi - mse_b_expect).abs() < 1e-10 * bi.max(1.0));
    }

    #[test]
    fn bi_weights_reduce_full_to_bi() {
        let spec = gamma1();
        let colloc = sample_collocation(&spec, (64, 16, 0), 5);
        let cand = Candidate::new(
            parse_prefix("add mul c x1 c", &spec.library).unwrap(),
            vec![0.3, -0.2],
        );
        let w0 = LossWeights {
            pde: 0.0,
            ..Default::default()
        };
        let w = LossWeights::default();
        let a = loss_full(&cand, &spec, &colloc, &w0);
        let b = loss_bi(&cand, &spec, &colloc, &w);
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }

    #[test]
    fn invalid_candidate_gets_zero_reward_and_infinite_loss() {
        let spec = gamma1();
        let colloc = sample_collocation(&spec, (64, 16, 0), 5);
        // log(x1) is undefined on half the domain.
        let cand = Candidate::new(parse_prefix("log x1", &spec.library).unwrap(), vec![]);
        let w = LossWeights::default();
        assert_eq!(reward(&cand, &spec, &colloc), 0.0);
        assert_eq!(loss_full(&cand, &spec, &colloc, &w), f64::INFINITY);
        assert_eq!(metric_lphy(&cand, &spec, &colloc), f64::INFINITY);
        assert_eq!(
            residual_values(&cand, &spec, &colloc.interior).unwrap_err(),
            InvalidCandidate
        );
    }

    #[test]
    fn rel_l2_scaling_identity() {
        let spec = gamma1();
        let pts = crate::problem::colloc::dense_points(&spec);
        let truth = truth_candidate(&spec);
        assert!(metric_rel_l2(&truth, &spec, &pts).unwrap() < 1e-15);
        let scaled = Candidate::new(
            parse_prefix(
                "mul 1.1 add add mul x1 mul x1 x1 mul x1 x1 x1",
                &spec.library,
            )
            .unwrap(),
            vec![],
        );
        let r = metric_rel_l2(&scaled, &spec, &pts).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let spec = gamma1();
        let colloc = sample_collocation(&spec, (64, 16, 0), 9);
        let tree = parse_prefix("add mul c mul x1 mul x1 x1 mul c x1", &spec.library).unwrap();
        let f = LossFn::new(&tree, &spec, LossKind::Full, LossWeights::default());
        let consts = [0.7, -1.2];
        let (_, grad) = f.value_grad(&spec, &colloc, &consts);
        let h = 1e-6;
        for k in 0..2 {
            let mut up = consts;
            let mut dn = consts;
            up[k] += h;
            dn[k] -= h;
            let fd = (f.value(&spec, &colloc, &up) - f.value(&spec, &colloc, &dn)) / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() < 1e-5 * grad[k].abs().max(1.0),
                "slot {k}: fd={fd} grad={}",
                grad[k]
            );
        }
    }
}
