use std::collections::BTreeMap;

use thiserror::Error;

use super::dual::Num;
use crate::expr::{ExpressionTree, Token, Var};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("variable {0} missing from point batch")]
    MissingVariable(Var),
    #[error("parameter a{0} has no bound value")]
    UnboundParameter(u32),
    #[error("point batch columns have unequal lengths")]
    RaggedBatch,
}

/// A batch of evaluation points, one column per variable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointBatch {
    cols: BTreeMap<Var, Vec<f64>>,
    len: usize,
}

impl PointBatch {
    pub fn new() -> Self {
        PointBatch::default()
    }

    pub fn insert(&mut self, var: Var, values: Vec<f64>) -> Result<(), EvalError> {
        if self.cols.is_empty() {
            self.len = values.len();
        } else if values.len() != self.len {
            return Err(EvalError::RaggedBatch);
        }
        self.cols.insert(var, values);
        Ok(())
    }

    pub fn from_cols(cols: Vec<(Var, Vec<f64>)>) -> Result<Self, EvalError> {
        let mut b = PointBatch::new();
        for (v, c) in cols {
            b.insert(v, c)?;
        }
        Ok(b)
    }

    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.cols.get(&var).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn variables(&self) -> impl Iterator<Item = Var> + '_ {
        self.cols.keys().copied()
    }

    /// Concatenates another batch with the same variable set.
    pub fn extend(&mut self, other: &PointBatch) {
        debug_assert!(self.cols.len() == other.cols.len());
        for (v, col) in &mut self.cols {
            col.extend_from_slice(other.get(*v).expect("variable sets differ"));
        }
        self.len += other.len;
    }

    /// The coordinates of a single point, in variable order.
    pub fn point(&self, i: usize) -> Vec<f64> {
        self.cols.values().map(|c| c[i]).collect()
    }
}

/// A constant bound to a tree: a scalar, or one value per anchor
/// configuration for vector-valued constants used by the recursive solver.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstVal {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ConstVal {
    pub fn at(&self, anchor: usize) -> f64 {
        match self {
            ConstVal::Scalar(x) => *x,
            ConstVal::Vector(v) => v[anchor],
        }
    }
}

/// How constant slots and parameter tokens resolve to numbers at each point.
#[derive(Debug, Clone, Copy)]
pub enum Bindings<'a> {
    /// One scalar per slot; parameter tokens are unbound.
    Scalar(&'a [f64]),
    /// Vector constants and parameters indexed by a per-point anchor.
    Anchored {
        consts: &'a [ConstVal],
        params: &'a [Vec<f64>],
        anchors: &'a [usize],
    },
}

impl<'a> Bindings<'a> {
    pub(crate) fn const_at(&self, slot: usize, point: usize) -> f64 {
        match self {
            Bindings::Scalar(c) => c[slot],
            Bindings::Anchored { consts, anchors, .. } => consts[slot].at(anchors[point]),
        }
    }

    pub(crate) fn param_at(&self, m: u32, point: usize) -> Result<f64, EvalError> {
        match self {
            Bindings::Scalar(_) => Err(EvalError::UnboundParameter(m)),
            Bindings::Anchored { params, anchors, .. } => params
                .get(m as usize)
                .map(|v| v[anchors[point]])
                .ok_or(EvalError::UnboundParameter(m)),
        }
    }
}

/// Which coordinate a dual-mode pass differentiates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualTarget {
    Slot(usize),
    Param(u32),
}

/// Pointwise values plus a flag for which points came out finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub values: Vec<f64>,
    pub finite_mask: Vec<bool>,
}

impl EvalResult {
    pub fn from_values(values: Vec<f64>) -> Self {
        let finite_mask = values.iter().map(|v| v.is_finite()).collect();
        EvalResult { values, finite_mask }
    }

    pub fn all_finite(&self) -> bool {
        self.finite_mask.iter().all(|&b| b)
    }

    pub fn any_finite(&self) -> bool {
        self.finite_mask.iter().any(|&b| b)
    }
}

#[cfg(test)]
struct Cursor {
    pos: usize,
    slot: usize,
}

#[cfg(test)]
fn eval_columns<N: Num>(
    tree: &ExpressionTree,
    cur: &mut Cursor,
    pts: &PointBatch,
    leaf: &impl Fn(&Token, usize, usize) -> Result<N, EvalError>,
) -> Result<Vec<N>, EvalError> {
    let tok = tree.traversal()[cur.pos];
    cur.pos += 1;
    let n = pts.len();
    match tok {
        Token::Bin(op) => {
            let a = eval_columns(tree, cur, pts, leaf)?;
            let b = eval_columns(tree, cur, pts, leaf)?;
            Ok(a.into_iter()
                .zip(b)
                .map(|(x, y)| N::bin(op, x, y))
                .collect())
        }
        Token::Un(op) => {
            let a = eval_columns(tree, cur, pts, leaf)?;
            Ok(a.into_iter().map(|x| N::un(op, x)).collect())
        }
        leaf_tok => {
            let slot_occurrence = if matches!(leaf_tok, Token::Const) {
                let s = cur.slot;
                cur.slot += 1;
                s
            } else {
                0
            };
            (0..n).map(|i| leaf(&leaf_tok, slot_occurrence, i)).collect()
        }
    }
}

/// Evaluates a tree at every point with scalar constants.
///
/// Division and log at invalid arguments produce non-finite entries flagged
/// in the mask; no operator is protected.
pub fn evaluate(
    tree: &ExpressionTree,
    pts: &PointBatch,
    consts: &[f64],
) -> Result<EvalResult, EvalError> {
    evaluate_bound(tree, pts, &Bindings::Scalar(consts))
}

/// Evaluates a tree under explicit bindings (scalar or anchored).
pub fn evaluate_bound(
    tree: &ExpressionTree,
    pts: &PointBatch,
    bind: &Bindings,
) -> Result<EvalResult, EvalError> {
    check_vars(tree, pts)?;
    let values = super::dag::Dag::compile(tree).eval(pts, bind)?;
    Ok(EvalResult::from_values(values))
}

/// Dual-mode evaluation: returns values and the derivative of each value
/// with respect to the target coordinate.
///
/// For a vector-valued slot the dot is the derivative with respect to
/// whichever entry serves that point's anchor.
pub fn evaluate_dual(
    tree: &ExpressionTree,
    pts: &PointBatch,
    bind: &Bindings,
    target: DualTarget,
) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    check_vars(tree, pts)?;
    super::dag::Dag::compile(tree).eval_dual(pts, bind, target)
}

/// Direct recursive traversal evaluation; the reference the interned-graph
/// path is checked against.
#[cfg(test)]
pub(crate) fn evaluate_reference(
    tree: &ExpressionTree,
    pts: &PointBatch,
    bind: &Bindings,
) -> Result<EvalResult, EvalError> {
    check_vars(tree, pts)?;
    let mut cur = Cursor { pos: 0, slot: 0 };
    let leaf = |tok: &Token, occ: usize, i: usize| -> Result<f64, EvalError> {
        match tok {
            Token::Var(v) => Ok(pts.get(*v).unwrap()[i]),
            Token::Const => Ok(bind.const_at(tree.slot_map()[occ], i)),
            Token::Lit(x) => Ok(*x),
            Token::Param(m) => bind.param_at(*m, i),
            _ => unreachable!(),
        }
    };
    let values = eval_columns::<f64>(tree, &mut cur, pts, &leaf)?;
    Ok(EvalResult::from_values(values))
}

fn check_vars(tree: &ExpressionTree, pts: &PointBatch) -> Result<(), EvalError> {
    for t in tree.traversal() {
        if let Token::Var(v) = t {
            if pts.get(*v).is_none() {
                return Err(EvalError::MissingVariable(*v));
            }
        }
    }
    Ok(())
}
