use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::diffeval::differentiate;
use crate::diffeval::{Bindings, Dag, Dual, DualTarget, EvalError, Num, PointBatch};
use crate::expr::{BinOp, ExpressionTree, UnOp, Var};

/// A derivative terminal of the residual DSL: the candidate solution itself,
/// or one of its pure first/second partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DerivKind {
    U,
    D1(Var),
    D2(Var),
}

impl DerivKind {
    pub fn parse(s: &str) -> Option<DerivKind> {
        if s == "u" {
            return Some(DerivKind::U);
        }
        let rest = s.strip_prefix("u_")?;
        if let Some(v) = Var::parse(rest) {
            return Some(DerivKind::D1(v));
        }
        // Doubled variable name: u_x1x1, u_tt.
        for v in all_vars() {
            let name = v.to_string();
            if rest == format!("{name}{name}") {
                return Some(DerivKind::D2(v));
            }
        }
        None
    }

    /// The variable differentiated against, if any.
    pub fn var(&self) -> Option<Var> {
        match self {
            DerivKind::U => None,
            DerivKind::D1(v) | DerivKind::D2(v) => Some(*v),
        }
    }
}

impl fmt::Display for DerivKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DerivKind::U => write!(f, "u"),
            DerivKind::D1(v) => write!(f, "u_{v}"),
            DerivKind::D2(v) => write!(f, "u_{v}{v}"),
        }
    }
}

fn all_vars() -> impl Iterator<Item = Var> {
    (1..=9).map(Var::X).chain(std::iter::once(Var::T))
}

/// One node of a residual expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResTok {
    Bin(BinOp),
    Un(UnOp),
    Var(Var),
    Lit(f64),
    Field(DerivKind),
}

impl ResTok {
    fn arity(&self) -> usize {
        match self {
            ResTok::Bin(_) => 2,
            ResTok::Un(_) => 1,
            _ => 0,
        }
    }

    pub fn symbol(&self) -> String {
        match self {
            ResTok::Bin(op) => op.symbol().to_string(),
            ResTok::Un(op) => op.symbol().to_string(),
            ResTok::Var(v) => v.to_string(),
            ResTok::Lit(x) => format!("{x}"),
            ResTok::Field(k) => k.to_string(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ResidualError {
    #[error("unknown residual token `{0}`")]
    UnknownToken(String),
    #[error("residual traversal is not a complete tree")]
    Malformed,
    #[error("residual is empty")]
    Empty,
}

/// The left-hand side of a differential equation, `F[u](x) = 0`, written
/// over derivative terminals, variables, literals, and library operators.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualExpr {
    traversal: Vec<ResTok>,
}

impl ResidualExpr {
    pub fn parse(text: &str) -> Result<ResidualExpr, ResidualError> {
        let ops: [(&str, ResTok); 8] = [
            ("add", ResTok::Bin(BinOp::Add)),
            ("sub", ResTok::Bin(BinOp::Sub)),
            ("mul", ResTok::Bin(BinOp::Mul)),
            ("div", ResTok::Bin(BinOp::Div)),
            ("sin", ResTok::Un(UnOp::Sin)),
            ("cos", ResTok::Un(UnOp::Cos)),
            ("exp", ResTok::Un(UnOp::Exp)),
            ("log", ResTok::Un(UnOp::Log)),
        ];
        let mut traversal = Vec::new();
        for word in text.split_whitespace() {
            if let Some((_, t)) = ops.iter().find(|(s, _)| *s == word) {
                traversal.push(*t);
            } else if let Some(k) = DerivKind::parse(word) {
                traversal.push(ResTok::Field(k));
            } else if let Some(v) = Var::parse(word) {
                traversal.push(ResTok::Var(v));
            } else if let Ok(x) = word.parse::<f64>() {
                traversal.push(ResTok::Lit(x));
            } else {
                return Err(ResidualError::UnknownToken(word.to_string()));
            }
        }
        if traversal.is_empty() {
            return Err(ResidualError::Empty);
        }
        let expr = ResidualExpr { traversal };
        if !expr.is_complete() {
            return Err(ResidualError::Malformed);
        }
        Ok(expr)
    }

    fn is_complete(&self) -> bool {
        let mut counter: i64 = 1;
        for (i, t) in self.traversal.iter().enumerate() {
            counter += t.arity() as i64 - 1;
            if counter == 0 && i + 1 != self.traversal.len() {
                return false;
            }
        }
        counter == 0
    }

    pub fn traversal(&self) -> &[ResTok] {
        &self.traversal
    }

    /// Derivative terminals used, deduplicated, in a stable order.
    pub fn terminals(&self) -> Vec<DerivKind> {
        let mut out: Vec<DerivKind> = Vec::new();
        for t in &self.traversal {
            if let ResTok::Field(k) = t {
                if !out.contains(k) {
                    out.push(*k);
                }
            }
        }
        out.sort();
        out
    }

    fn subtree_len(&self, start: usize) -> usize {
        let mut counter: i64 = 1;
        let mut i = start;
        while counter > 0 {
            counter += self.traversal[i].arity() as i64 - 1;
            i += 1;
        }
        i - start
    }

    /// Splits the expression into its top-level signed additive terms.
    pub fn signed_terms(&self) -> Vec<(bool, Vec<ResTok>)> {
        let mut out = Vec::new();
        self.collect_terms(0, true, &mut out);
        out
    }

    fn collect_terms(&self, pos: usize, positive: bool, out: &mut Vec<(bool, Vec<ResTok>)>) {
        match self.traversal[pos] {
            ResTok::Bin(BinOp::Add) => {
                let a = pos + 1;
                let b = a + self.subtree_len(a);
                self.collect_terms(a, positive, out);
                self.collect_terms(b, positive, out);
            }
            ResTok::Bin(BinOp::Sub) => {
                let a = pos + 1;
                let b = a + self.subtree_len(a);
                self.collect_terms(a, positive, out);
                self.collect_terms(b, !positive, out);
            }
            _ => {
                let len = self.subtree_len(pos);
                out.push((positive, self.traversal[pos..pos + len].to_vec()));
            }
        }
    }

    /// Keeps only the additive terms whose derivative terminals involve
    /// resolved variables; plain `u` terms and source terms always stay.
    /// Returns `None` when nothing remains.
    pub fn restrict(&self, resolved: &[Var]) -> Option<ResidualExpr> {
        let mut acc: Option<(bool, Vec<ResTok>)> = None;
        let mut kept: Vec<(bool, Vec<ResTok>)> = Vec::new();
        for (sign, toks) in self.signed_terms() {
            let ok = toks.iter().all(|t| match t {
                ResTok::Field(k) => k.var().map_or(true, |v| resolved.contains(&v)),
                _ => true,
            });
            if ok {
                kept.push((sign, toks));
            }
        }
        for (sign, toks) in kept {
            acc = Some(match acc {
                None => {
                    if sign {
                        (true, toks)
                    } else {
                        let mut t = vec![ResTok::Bin(BinOp::Sub), ResTok::Lit(0.0)];
                        t.extend(toks);
                        (true, t)
                    }
                }
                Some((_, prev)) => {
                    let op = if sign { BinOp::Add } else { BinOp::Sub };
                    let mut t = vec![ResTok::Bin(op)];
                    t.extend(prev);
                    t.extend(toks);
                    (true, t)
                }
            });
        }
        acc.map(|(_, traversal)| ResidualExpr { traversal })
    }

    pub fn to_prefix(&self) -> String {
        self.traversal
            .iter()
            .map(|t| t.symbol())
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn eval_rec<N: Num>(
        &self,
        pos: &mut usize,
        n: usize,
        leaf: &impl Fn(&ResTok, usize) -> N,
    ) -> Vec<N> {
        let tok = self.traversal[*pos];
        *pos += 1;
        match tok {
            ResTok::Bin(op) => {
                let a = self.eval_rec(pos, n, leaf);
                let b = self.eval_rec(pos, n, leaf);
                a.into_iter().zip(b).map(|(x, y)| N::bin(op, x, y)).collect()
            }
            ResTok::Un(op) => {
                let a = self.eval_rec(pos, n, leaf);
                a.into_iter().map(|x| N::un(op, x)).collect()
            }
            t => (0..n).map(|i| leaf(&t, i)).collect(),
        }
    }
}

/// A candidate expression paired with the derivative trees the residual
/// needs. Built once per candidate structure and reused across constant
/// optimization iterations; all trees share the candidate's constant slots.
#[derive(Debug, Clone)]
pub struct ResidualKit {
    terminals: Vec<DerivKind>,
    dags: Vec<Dag>,
}

impl ResidualKit {
    pub fn new(candidate: &ExpressionTree, residual: &ResidualExpr) -> ResidualKit {
        let terminals = residual.terminals();
        let dags = terminals
            .iter()
            .map(|k| {
                let tree = match k {
                    DerivKind::U => candidate.clone(),
                    DerivKind::D1(v) => differentiate(candidate, *v, 1),
                    DerivKind::D2(v) => differentiate(candidate, *v, 2),
                };
                Dag::compile(&tree)
            })
            .collect();
        ResidualKit { terminals, dags }
    }

    /// Builds a kit for a restricted residual, reusing nothing; terminals
    /// absent from the restriction are simply not differentiated.
    pub fn terminals(&self) -> &[DerivKind] {
        &self.terminals
    }

    fn field_columns(
        &self,
        pts: &PointBatch,
        bind: &Bindings,
    ) -> Result<BTreeMap<DerivKind, Vec<f64>>, EvalError> {
        let mut map = BTreeMap::new();
        for (k, dag) in self.terminals.iter().zip(&self.dags) {
            map.insert(*k, dag.eval(pts, bind)?);
        }
        Ok(map)
    }

    /// Residual values at each point under the given bindings.
    pub fn eval(
        &self,
        residual: &ResidualExpr,
        pts: &PointBatch,
        bind: &Bindings,
    ) -> Result<Vec<f64>, EvalError> {
        let fields = self.field_columns(pts, bind)?;
        let n = pts.len();
        let leaf = |t: &ResTok, i: usize| -> f64 {
            match t {
                ResTok::Var(v) => pts.get(*v).expect("declared variable")[i],
                ResTok::Lit(x) => *x,
                ResTok::Field(k) => fields[k][i],
                _ => unreachable!(),
            }
        };
        let mut pos = 0;
        Ok(residual.eval_rec::<f64>(&mut pos, n, &leaf))
    }

    /// Residual values and their derivative with respect to one constant
    /// coordinate, propagated through every derivative terminal.
    pub fn eval_dual(
        &self,
        residual: &ResidualExpr,
        pts: &PointBatch,
        bind: &Bindings,
        target: DualTarget,
    ) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let mut fields: BTreeMap<DerivKind, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (k, dag) in self.terminals.iter().zip(&self.dags) {
            let vd = dag.eval_dual(pts, bind, target)?;
            fields.insert(*k, vd);
        }
        let n = pts.len();
        let leaf = |t: &ResTok, i: usize| -> Dual {
            match t {
                ResTok::Var(v) => Dual::constant(pts.get(*v).expect("declared variable")[i]),
                ResTok::Lit(x) => Dual::constant(*x),
                ResTok::Field(k) => {
                    let (v, d) = &fields[k];
                    Dual { v: v[i], d: d[i] }
                }
                _ => unreachable!(),
            }
        };
        let mut pos = 0;
        let out = residual.eval_rec::<Dual>(&mut pos, n, &leaf);
        Ok(out.into_iter().map(|d| (d.v, d.d)).unzip())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_terminals() {
        assert_eq!(DerivKind::parse("u"), Some(DerivKind::U));
        assert_eq!(DerivKind::parse("u_x1"), Some(DerivKind::D1(Var::X(1))));
        assert_eq!(DerivKind::parse("u_x1x1"), Some(DerivKind::D2(Var::X(1))));
        assert_eq!(DerivKind::parse("u_tt"), Some(DerivKind::D2(Var::T)));
        assert_eq!(DerivKind::parse("u_x1x2"), None);
    }

    #[test]
    fn parse_poisson_like_residual() {
        let r = ResidualExpr::parse("sub add u_x1x1 u_x2x2 add mul 30 mul x1 x1 1").unwrap();
        assert_eq!(
            r.terminals(),
            vec![DerivKind::D2(Var::X(1)), DerivKind::D2(Var::X(2))]
        );
    }

    #[test]
    fn restriction_drops_unresolved_terms() {
        let r = ResidualExpr::parse("sub add u_x1x1 u_x2x2 mul 30 mul x1 x1").unwrap();
        let restricted = r.restrict(&[Var::X(1)]).unwrap();
        assert_eq!(
            restricted.terminals(),
            vec![DerivKind::D2(Var::X(1))]
        );
        // Source term survives; u_x2x2 is gone.
        assert!(restricted.to_prefix().contains("30"));
        assert!(!restricted.to_prefix().contains("u_x2x2"));
    }

    #[test]
    fn restriction_keeps_plain_u_terms() {
        let r = ResidualExpr::parse("add u_tt add u mul u mul u u").unwrap();
        let restricted = r.restrict(&[]).unwrap();
        assert_eq!(restricted.terminals(), vec![DerivKind::U]);
    }

    #[test]
    fn restriction_can_remove_everything() {
        let r = ResidualExpr::parse("u_x1x1").unwrap();
        assert!(r.restrict(&[]).is_none());
    }

    #[test]
    fn fully_resolved_restriction_is_identity() {
        let r = ResidualExpr::parse("sub add u_x1x1 u_x2x2 mul 7.8 x1").unwrap();
        let restricted = r.restrict(&[Var::X(1), Var::X(2)]).unwrap();
        assert_eq!(restricted.signed_terms().len(), r.signed_terms().len());
    }

    #[test]
    fn kit_annihilates_exact_solution() {
        use crate::expr::{parse_prefix, Library};
        // u'' = 6x + 2 with u = x^3 + x^2 + x.
        let r = ResidualExpr::parse("sub u_x1x1 add mul 6 x1 2").unwrap();
        let lib = Library::base();
        let truth = parse_prefix("add add mul x1 mul x1 x1 mul x1 x1 x1", &lib).unwrap();
        let kit = ResidualKit::new(&truth, &r);
        let pts = PointBatch::from_cols(vec![(Var::X(1), vec![-0.8, 0.1, 0.9])]).unwrap();
        let vals = kit.eval(&r, &pts, &Bindings::Scalar(&[])).unwrap();
        for v in vals {
            assert!(v.abs() < 1e-10);
        }
    }
}
