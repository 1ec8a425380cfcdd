use crate::expr::{BinOp, ExpressionTree, Token, UnOp, Var};

/// A traversal fragment carrying, for each `Const` occurrence, the slot of
/// the source tree it refers to.
#[derive(Debug, Clone)]
struct Frag {
    toks: Vec<Token>,
    slots: Vec<usize>,
}

impl Frag {
    fn lit(x: f64) -> Frag {
        Frag {
            toks: vec![Token::Lit(x)],
            slots: vec![],
        }
    }

    fn is_lit(&self) -> Option<f64> {
        match self.toks.as_slice() {
            [Token::Lit(x)] => Some(*x),
            _ => None,
        }
    }
}

/// Joins fragments under a binary operator, folding literal-only operands.
fn bin(op: BinOp, a: Frag, b: Frag) -> Frag {
    if let (Some(x), Some(y)) = (a.is_lit(), b.is_lit()) {
        return Frag::lit(op.apply(x, y));
    }
    let mut toks = Vec::with_capacity(1 + a.toks.len() + b.toks.len());
    toks.push(Token::Bin(op));
    toks.extend(a.toks);
    toks.extend(b.toks);
    let mut slots = a.slots;
    slots.extend(b.slots);
    Frag { toks, slots }
}

fn un(op: UnOp, a: Frag) -> Frag {
    if let Some(x) = a.is_lit() {
        return Frag::lit(op.apply(x));
    }
    let mut toks = Vec::with_capacity(1 + a.toks.len());
    toks.push(Token::Un(op));
    toks.extend(a.toks);
    Frag {
        toks,
        slots: a.slots,
    }
}

fn neg(a: Frag) -> Frag {
    bin(BinOp::Sub, Frag::lit(0.0), a)
}

/// Copies the subtree rooted at `pos`, preserving slot references.
fn copy_subtree(tree: &ExpressionTree, pos: usize, occ_of_pos: &[usize]) -> (Frag, usize) {
    let len = crate::expr::subtree_len(tree.traversal(), pos);
    let toks = tree.traversal()[pos..pos + len].to_vec();
    let mut slots = Vec::new();
    for (off, t) in toks.iter().enumerate() {
        if matches!(t, Token::Const) {
            slots.push(tree.slot_map()[occ_of_pos[pos + off]]);
        }
    }
    (Frag { toks, slots }, len)
}

fn derive_node(
    tree: &ExpressionTree,
    pos: usize,
    var: Var,
    occ_of_pos: &[usize],
) -> (Frag, usize) {
    let tok = tree.traversal()[pos];
    match tok {
        Token::Var(v) => (Frag::lit(if v == var { 1.0 } else { 0.0 }), 1),
        Token::Const | Token::Lit(_) | Token::Param(_) => (Frag::lit(0.0), 1),
        Token::Bin(op) => {
            let (da, alen) = derive_node(tree, pos + 1, var, occ_of_pos);
            let (db, blen) = derive_node(tree, pos + 1 + alen, var, occ_of_pos);
            let (a, _) = copy_subtree(tree, pos + 1, occ_of_pos);
            let (b, _) = copy_subtree(tree, pos + 1 + alen, occ_of_pos);
            let frag = match op {
                BinOp::Add => bin(BinOp::Add, da, db),
                BinOp::Sub => bin(BinOp::Sub, da, db),
                BinOp::Mul => bin(
                    BinOp::Add,
                    bin(BinOp::Mul, da, b),
                    bin(BinOp::Mul, a, db),
                ),
                BinOp::Div => {
                    // (da*b - a*db) / b^2
                    let num = bin(
                        BinOp::Sub,
                        bin(BinOp::Mul, da, b.clone()),
                        bin(BinOp::Mul, a, db),
                    );
                    let den = bin(BinOp::Mul, b.clone(), b);
                    bin(BinOp::Div, num, den)
                }
            };
            (frag, 1 + alen + blen)
        }
        Token::Un(op) => {
            let (da, alen) = derive_node(tree, pos + 1, var, occ_of_pos);
            let (a, _) = copy_subtree(tree, pos + 1, occ_of_pos);
            let frag = match op {
                UnOp::Sin => bin(BinOp::Mul, un(UnOp::Cos, a), da),
                UnOp::Cos => bin(BinOp::Mul, neg(un(UnOp::Sin, a)), da),
                UnOp::Exp => bin(BinOp::Mul, un(UnOp::Exp, a), da),
                UnOp::Log => bin(BinOp::Div, da, a),
            };
            (frag, 1 + alen)
        }
    }
}

fn derive_once(tree: &ExpressionTree, var: Var) -> ExpressionTree {
    // Map traversal position -> const-occurrence index.
    let mut occ_of_pos = vec![0usize; tree.len()];
    let mut occ = 0;
    for (p, t) in tree.traversal().iter().enumerate() {
        if matches!(t, Token::Const) {
            occ_of_pos[p] = occ;
            occ += 1;
        }
    }
    let (frag, consumed) = derive_node(tree, 0, var, &occ_of_pos);
    debug_assert_eq!(consumed, tree.len());
    ExpressionTree::from_parts(frag.toks, frag.slots, tree.n_slots())
}

/// Exact symbolic derivative of order 1 or 2 with respect to a variable.
///
/// The result shares constant slots with the source tree: both bind to the
/// same constant vector, so optimizing a constant updates every derivative
/// built from the tree. Literal-only subtrees are folded; nothing else is
/// simplified.
pub fn differentiate(tree: &ExpressionTree, var: Var, order: u8) -> ExpressionTree {
    assert!(order == 1 || order == 2, "only first and second derivatives");
    let d1 = derive_once(tree, var);
    if order == 1 {
        d1
    } else {
        derive_once(&d1, var)
    }
}
