use ndarray::Array2;

use super::dag::Dag;
use super::eval::{Bindings, DualTarget, EvalError, EvalResult, PointBatch};
use crate::expr::ExpressionTree;

/// Jacobian of tree values with respect to the constants.
#[derive(Debug, Clone)]
pub struct GradResult {
    /// Entry `(i, k)` is the derivative of the value at point `i` with
    /// respect to constant `k`.
    pub jacobian: Array2<f64>,
    /// False where the value or any of its partials came out non-finite.
    pub finite_mask: Vec<bool>,
    pub values: Vec<f64>,
}

/// Forward-mode gradient of the tree values with respect to each constant
/// slot, one dual pass per slot.
pub fn grad_constants(
    tree: &ExpressionTree,
    pts: &PointBatch,
    consts: &[f64],
) -> Result<GradResult, EvalError> {
    let n = pts.len();
    let k = tree.n_slots();
    let bind = Bindings::Scalar(consts);
    let dag = Dag::compile(tree);
    let mut jacobian = Array2::zeros((n, k));
    let mut finite_mask = vec![true; n];
    let mut values = vec![0.0; n];
    if k == 0 {
        let r = EvalResult::from_values(dag.eval(pts, &bind)?);
        finite_mask = r.finite_mask;
        values = r.values;
    }
    for slot in 0..k {
        let (vals, dots) = dag.eval_dual(pts, &bind, DualTarget::Slot(slot))?;
        for i in 0..n {
            jacobian[(i, slot)] = dots[i];
            if !vals[i].is_finite() || !dots[i].is_finite() {
                finite_mask[i] = false;
            }
        }
        if slot == 0 {
            values = vals;
        }
    }
    Ok(GradResult {
        jacobian,
        finite_mask,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_prefix, Library, Var};

    fn x_batch(x1: Vec<f64>) -> PointBatch {
        PointBatch::from_cols(vec![(Var::X(1), x1)]).unwrap()
    }

    #[test]
    fn linear_in_a_constant() {
        let lib = Library::base();
        let tree = parse_prefix("mul c x1", &lib).unwrap();
        let g = grad_constants(&tree, &x_batch(vec![2.0, 3.0]), &[1.5]).unwrap();
        assert_eq!(g.jacobian[(0, 0)], 2.0);
        assert_eq!(g.jacobian[(1, 0)], 3.0);
    }

    #[test]
    fn exp_of_constant() {
        let lib = Library::base();
        let tree = parse_prefix("exp c", &lib).unwrap();
        let g = grad_constants(&tree, &x_batch(vec![7.0, -1.0]), &[0.0]).unwrap();
        assert_eq!(g.jacobian[(0, 0)], 1.0);
        assert_eq!(g.jacobian[(1, 0)], 1.0);
    }

    #[test]
    fn affine_jacobian_row() {
        let lib = Library::base();
        let tree = parse_prefix("add mul c x1 c", &lib).unwrap();
        let g = grad_constants(&tree, &x_batch(vec![5.0]), &[2.0, 0.3]).unwrap();
        assert_eq!(g.jacobian[(0, 0)], 5.0);
        assert_eq!(g.jacobian[(0, 1)], 1.0);
    }

    #[test]
    fn matches_central_differences() {
        let lib = Library::base();
        let tree = parse_prefix("mul c sin add mul c x1 c", &lib).unwrap();
        let consts = [0.8, 1.7, -0.4];
        let pts = x_batch(vec![-0.6, 0.1, 0.9]);
        let g = grad_constants(&tree, &pts, &consts).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut up = consts;
            let mut dn = consts;
            up[k] += h;
            dn[k] -= h;
            let vu = super::super::eval::evaluate(&tree, &pts, &up).unwrap().values;
            let vd = super::super::eval::evaluate(&tree, &pts, &dn).unwrap().values;
            for i in 0..3 {
                let fd = (vu[i] - vd[i]) / (2.0 * h);
                let an = g.jacobian[(i, k)];
                assert!(
                    (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                    "slot {k} point {i}: fd={fd} an={an}"
                );
            }
        }
    }
}
