use thiserror::Error;

use super::token::Token;

/// Structural bounds enforced while sampling skeletons.
#[derive(Debug, Clone, Copy)]
pub struct StructureLimits {
    pub min_len: usize,
    pub max_len: usize,
    pub max_const_slots: usize,
}

impl Default for StructureLimits {
    fn default() -> Self {
        StructureLimits {
            min_len: 4,
            max_len: 40,
            max_const_slots: 6,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("all tokens masked: no feasible continuation")]
pub struct NoFeasibleToken;

/// Incremental state of a partially sampled pre-order traversal.
///
/// Tracks the unselected-node counter and the chain of incomplete ancestors,
/// from which the parent/sibling observation of the next token is derived.
#[derive(Debug, Clone)]
pub struct SamplerContext {
    traversal: Vec<Token>,
    counter: usize,
    // (position, children still unfilled) for every incomplete ancestor of
    // the next token, outermost first.
    stack: Vec<(usize, usize)>,
    n_consts: usize,
}

impl SamplerContext {
    pub fn new() -> Self {
        SamplerContext {
            traversal: Vec::new(),
            counter: 1,
            stack: Vec::new(),
            n_consts: 0,
        }
    }

    /// Rebuilds the context from an existing partial traversal.
    pub fn from_partial(traversal: &[Token]) -> Self {
        let mut ctx = SamplerContext::new();
        for &t in traversal {
            ctx.push(t);
        }
        ctx
    }

    pub fn push(&mut self, tok: Token) {
        debug_assert!(self.counter > 0, "push on a completed traversal");
        let pos = self.traversal.len();
        self.traversal.push(tok);
        self.counter = self.counter + tok.arity() - 1;
        if matches!(tok, Token::Const) {
            self.n_consts += 1;
        }
        if tok.arity() > 0 {
            self.stack.push((pos, tok.arity()));
        } else {
            // A terminal completes a subtree; completion may cascade upward.
            while let Some(top) = self.stack.last_mut() {
                top.1 -= 1;
                if top.1 == 0 {
                    self.stack.pop();
                } else {
                    break;
                }
            }
        }
    }

    pub fn traversal(&self) -> &[Token] {
        &self.traversal
    }

    pub fn len(&self) -> usize {
        self.traversal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traversal.is_empty()
    }

    /// Unselected-node counter; 0 means the traversal is complete.
    pub fn counter(&self) -> usize {
        self.counter
    }

    pub fn is_complete(&self) -> bool {
        self.counter == 0
    }

    pub fn n_const_slots(&self) -> usize {
        self.n_consts
    }

    /// Traversal index of the parent of the next token.
    pub fn parent_index(&self) -> Option<usize> {
        self.stack.last().map(|&(pos, _)| pos)
    }

    /// Traversal index of the root of the parent's completed first child.
    pub fn sibling_index(&self) -> Option<usize> {
        let &(pos, remaining) = self.stack.last()?;
        if self.traversal[pos].arity() == 2 && remaining == 1 {
            Some(pos + 1)
        } else {
            None
        }
    }

    /// True if any incomplete ancestor of the next token is sin or cos.
    pub fn inside_trig(&self) -> bool {
        self.stack
            .iter()
            .any(|&(pos, _)| matches!(self.traversal[pos], Token::Un(op) if op.is_trig()))
    }
}

impl Default for SamplerContext {
    fn default() -> Self {
        SamplerContext::new()
    }
}

/// Parent and sibling of the token about to be sampled.
///
/// Parent is the nearest ancestor still awaiting a child; sibling is that
/// ancestor's already-completed first child's root. Both are empty at the
/// first step.
pub fn parent_sibling(ctx: &SamplerContext) -> (Option<Token>, Option<Token>) {
    let parent = ctx.parent_index().map(|i| ctx.traversal()[i]);
    let sibling = ctx.sibling_index().map(|i| ctx.traversal()[i]);
    (parent, sibling)
}

/// Zeroes the probabilities of infeasible tokens and renormalizes.
///
/// Rules: the remaining-length budget bounds operators near the cap and
/// terminals near the floor; trig may not nest inside trig; a binary operator
/// may not get two constant-slot children; a unary operator's child may not
/// be a lone constant slot; the constant-slot budget is capped.
pub fn apply_constraints(
    probs: &[f64],
    library: &[Token],
    ctx: &SamplerContext,
    limits: &StructureLimits,
) -> Result<Vec<f64>, NoFeasibleToken> {
    assert_eq!(probs.len(), library.len());
    let len = ctx.len();
    let counter = ctx.counter();
    let (parent, sibling) = parent_sibling(ctx);
    let in_trig = ctx.inside_trig();

    let mut out = Vec::with_capacity(probs.len());
    for (p, tok) in probs.iter().zip(library.iter()) {
        let arity = tok.arity();
        let mut ok = true;
        // Final length is at least len + counter; each operator raises that
        // floor by its arity.
        if len + counter + arity > limits.max_len {
            ok = false;
        }
        // A terminal with counter 1 ends the traversal right here.
        if arity == 0 && counter == 1 && len + 1 < limits.min_len {
            ok = false;
        }
        if in_trig {
            if let Token::Un(op) = tok {
                if op.is_trig() {
                    ok = false;
                }
            }
        }
        if matches!(tok, Token::Const) {
            if ctx.n_const_slots() >= limits.max_const_slots {
                ok = false;
            }
            match (parent, sibling) {
                (Some(p), _) if p.arity() == 1 => ok = false,
                (Some(p), Some(Token::Const)) if p.arity() == 2 => ok = false,
                _ => {}
            }
        }
        out.push(if ok { *p } else { 0.0 });
    }

    let sum: f64 = out.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return Err(NoFeasibleToken);
    }
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::token::{BinOp, Library, UnOp, Var};

    fn ctx_of(toks: &[Token]) -> SamplerContext {
        SamplerContext::from_partial(toks)
    }

    #[test]
    fn empty_context_has_no_parent() {
        let ctx = SamplerContext::new();
        assert_eq!(parent_sibling(&ctx), (None, None));
    }

    #[test]
    fn binary_parent_with_complete_first_child() {
        let ctx = ctx_of(&[Token::Bin(BinOp::Mul), Token::Var(Var::X(1))]);
        assert_eq!(
            parent_sibling(&ctx),
            (Some(Token::Bin(BinOp::Mul)), Some(Token::Var(Var::X(1))))
        );
    }

    #[test]
    fn unary_parent_has_no_sibling() {
        let ctx = ctx_of(&[Token::Bin(BinOp::Add), Token::Un(UnOp::Sin)]);
        assert_eq!(parent_sibling(&ctx), (Some(Token::Un(UnOp::Sin)), None));
    }

    #[test]
    fn trig_subtree_masks_trig() {
        let lib = Library::base();
        let probs = vec![1.0 / lib.len() as f64; lib.len()];
        let ctx = ctx_of(&[Token::Un(UnOp::Sin)]);
        let limits = StructureLimits::default();
        let out = apply_constraints(&probs, lib.tokens(), &ctx, &limits).unwrap();
        let sin_i = lib.index_of(&Token::Un(UnOp::Sin)).unwrap();
        let cos_i = lib.index_of(&Token::Un(UnOp::Cos)).unwrap();
        assert_eq!(out[sin_i], 0.0);
        assert_eq!(out[cos_i], 0.0);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_of_one_masks_operators() {
        let lib = Library::base();
        let probs = vec![1.0 / lib.len() as f64; lib.len()];
        // 39 tokens deep chain: only one slot left under max_len = 40.
        let mut ctx = SamplerContext::new();
        for _ in 0..39 {
            ctx.push(Token::Un(UnOp::Exp));
        }
        let limits = StructureLimits::default();
        let out = apply_constraints(&probs, lib.tokens(), &ctx, &limits).unwrap();
        for (p, tok) in out.iter().zip(lib.tokens()) {
            if tok.arity() > 0 {
                assert_eq!(*p, 0.0, "operator {} not masked", tok.symbol());
            }
        }
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sibling_const_masks_const() {
        let lib = Library::base();
        let probs = vec![1.0 / lib.len() as f64; lib.len()];
        let ctx = ctx_of(&[Token::Bin(BinOp::Add), Token::Const]);
        let limits = StructureLimits::default();
        let out = apply_constraints(&probs, lib.tokens(), &ctx, &limits).unwrap();
        let c_i = lib.index_of(&Token::Const).unwrap();
        assert_eq!(out[c_i], 0.0);
    }

    #[test]
    fn unary_parent_masks_lone_const() {
        let lib = Library::base();
        let probs = vec![1.0 / lib.len() as f64; lib.len()];
        let ctx = ctx_of(&[Token::Un(UnOp::Exp)]);
        let limits = StructureLimits::default();
        let out = apply_constraints(&probs, lib.tokens(), &ctx, &limits).unwrap();
        let c_i = lib.index_of(&Token::Const).unwrap();
        assert_eq!(out[c_i], 0.0);
    }

    #[test]
    fn no_feasible_token_when_everything_masked() {
        // Library whose only terminal is the constant slot: under a unary
        // parent with the budget forcing terminals, nothing remains.
        let lib = Library::new(vec![Token::Un(UnOp::Exp), Token::Const]).unwrap();
        let probs = vec![0.5, 0.5];
        let mut ctx = SamplerContext::new();
        for _ in 0..39 {
            ctx.push(Token::Un(UnOp::Exp));
        }
        let limits = StructureLimits::default();
        let err = apply_constraints(&probs, lib.tokens(), &ctx, &limits).unwrap_err();
        assert_eq!(err, NoFeasibleToken);
    }
}
