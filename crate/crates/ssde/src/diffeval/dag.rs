use std::collections::HashMap;

use super::dual::{Dual, Num};
use super::eval::{Bindings, DualTarget, EvalError, PointBatch};
use crate::expr::{BinOp, ExpressionTree, Token, UnOp, Var};

/// A node of the interned evaluation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum DagOp {
    Bin(BinOp, usize, usize),
    Un(UnOp, usize),
    Var(Var),
    /// Constant slot, keyed by the slot index from the tree's slot map.
    Const(usize),
    /// Literal, keyed by bit pattern so interning stays exact.
    Lit(u64),
    Param(u32),
}

/// An expression tree with structurally identical subtrees merged.
///
/// Derivative trees repeat large fragments wherever the product or quotient
/// rule fired; evaluating the interned graph computes every distinct
/// fragment once per batch instead of once per occurrence. Results are
/// bit-identical to direct traversal evaluation.
#[derive(Debug, Clone)]
pub struct Dag {
    /// Topologically ordered: children precede parents; the last node is the
    /// root.
    ops: Vec<DagOp>,
    vars: Vec<Var>,
}

impl Dag {
    pub fn compile(tree: &ExpressionTree) -> Dag {
        let mut intern: HashMap<DagOp, usize> = HashMap::new();
        let mut ops: Vec<DagOp> = Vec::new();
        let mut occ = 0usize;
        let mut pos = 0usize;
        let root = build(tree, &mut pos, &mut occ, &mut intern, &mut ops);
        debug_assert_eq!(root + 1, ops.len());
        let mut vars: Vec<Var> = ops
            .iter()
            .filter_map(|op| match op {
                DagOp::Var(v) => Some(*v),
                _ => None,
            })
            .collect();
        vars.sort();
        vars.dedup();
        Dag { ops, vars }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn variables(&self) -> &[Var] {
        &self.vars
    }

    fn check_vars(&self, pts: &PointBatch) -> Result<(), EvalError> {
        for v in &self.vars {
            if pts.get(*v).is_none() {
                return Err(EvalError::MissingVariable(*v));
            }
        }
        Ok(())
    }

    fn eval_generic<N: Num>(
        &self,
        pts: &PointBatch,
        leaf: &impl Fn(&DagOp, usize) -> Result<N, EvalError>,
    ) -> Result<Vec<N>, EvalError> {
        self.check_vars(pts)?;
        let n = pts.len();
        let mut cols: Vec<Vec<N>> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let col = match op {
                DagOp::Bin(b, l, r) => {
                    let (lc, rc) = (&cols[*l], &cols[*r]);
                    (0..n).map(|i| N::bin(*b, lc[i], rc[i])).collect()
                }
                DagOp::Un(u, a) => {
                    let ac = &cols[*a];
                    (0..n).map(|i| N::un(*u, ac[i])).collect()
                }
                leaf_op => (0..n)
                    .map(|i| leaf(leaf_op, i))
                    .collect::<Result<Vec<N>, EvalError>>()?,
            };
            cols.push(col);
        }
        Ok(cols.pop().expect("nonempty dag"))
    }

    pub fn eval(&self, pts: &PointBatch, bind: &Bindings) -> Result<Vec<f64>, EvalError> {
        let leaf = |op: &DagOp, i: usize| -> Result<f64, EvalError> {
            match op {
                DagOp::Var(v) => Ok(pts.get(*v).unwrap()[i]),
                DagOp::Const(slot) => Ok(bind.const_at(*slot, i)),
                DagOp::Lit(bits) => Ok(f64::from_bits(*bits)),
                DagOp::Param(m) => bind.param_at(*m, i),
                _ => unreachable!(),
            }
        };
        self.eval_generic::<f64>(pts, &leaf)
    }

    pub fn eval_dual(
        &self,
        pts: &PointBatch,
        bind: &Bindings,
        target: DualTarget,
    ) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let leaf = |op: &DagOp, i: usize| -> Result<Dual, EvalError> {
            match op {
                DagOp::Var(v) => Ok(Dual::constant(pts.get(*v).unwrap()[i])),
                DagOp::Const(slot) => {
                    let v = bind.const_at(*slot, i);
                    Ok(if target == DualTarget::Slot(*slot) {
                        Dual::seeded(v)
                    } else {
                        Dual::constant(v)
                    })
                }
                DagOp::Lit(bits) => Ok(Dual::constant(f64::from_bits(*bits))),
                DagOp::Param(m) => {
                    let v = bind.param_at(*m, i)?;
                    Ok(if target == DualTarget::Param(*m) {
                        Dual::seeded(v)
                    } else {
                        Dual::constant(v)
                    })
                }
                _ => unreachable!(),
            }
        };
        let out = self.eval_generic::<Dual>(pts, &leaf)?;
        Ok(out.into_iter().map(|d| (d.v, d.d)).unzip())
    }
}

fn build(
    tree: &ExpressionTree,
    pos: &mut usize,
    occ: &mut usize,
    intern: &mut HashMap<DagOp, usize>,
    ops: &mut Vec<DagOp>,
) -> usize {
    let tok = tree.traversal()[*pos];
    *pos += 1;
    let op = match tok {
        Token::Bin(b) => {
            let l = build(tree, pos, occ, intern, ops);
            let r = build(tree, pos, occ, intern, ops);
            DagOp::Bin(b, l, r)
        }
        Token::Un(u) => {
            let a = build(tree, pos, occ, intern, ops);
            DagOp::Un(u, a)
        }
        Token::Var(v) => DagOp::Var(v),
        Token::Const => {
            let slot = tree.slot_map()[*occ];
            *occ += 1;
            DagOp::Const(slot)
        }
        Token::Lit(x) => DagOp::Lit(x.to_bits()),
        Token::Param(m) => DagOp::Param(m),
    };
    if let Some(&id) = intern.get(&op) {
        return id;
    }
    let id = ops.len();
    ops.push(op);
    intern.insert(op, id);
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeval::differentiate;
    use crate::diffeval::eval::evaluate_reference;
    use crate::expr::{parse_prefix, Library};

    #[test]
    fn dag_shrinks_derivative_trees() {
        let lib = Library::base();
        let tree = parse_prefix(
            "div mul x1 mul x1 mul x1 x1 add mul x1 x1 add x1 c",
            &lib,
        )
        .unwrap();
        let d2 = differentiate(&tree, Var::X(1), 2);
        let dag = Dag::compile(&d2);
        assert!(dag.len() < d2.len() / 2, "{} vs {}", dag.len(), d2.len());
    }

    #[test]
    fn dag_matches_tree_evaluation_bitwise() {
        let lib = Library::base();
        let pts = PointBatch::from_cols(vec![(Var::X(1), vec![-0.7, 0.2, 1.3])]).unwrap();
        for text in [
            "mul c sin add mul c x1 c",
            "div add x1 c mul x1 x1",
            "exp mul x1 log add x1 2",
        ] {
            let tree = parse_prefix(text, &lib).unwrap();
            let consts = vec![0.8; tree.n_slots()];
            let d2 = differentiate(&tree, Var::X(1), 2);
            let bind = Bindings::Scalar(&consts);
            let direct = evaluate_reference(&d2, &pts, &bind).unwrap().values;
            let dag = Dag::compile(&d2);
            let viadag = dag.eval(&pts, &bind).unwrap();
            assert_eq!(direct, viadag);
        }
    }
}
