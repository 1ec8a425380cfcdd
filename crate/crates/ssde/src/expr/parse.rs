use thiserror::Error;

use super::token::{Library, Token};
use super::tree::{build_tree, subtree_len, ExpressionTree, TreeError};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("empty expression")]
    Empty,
}

/// Parses a whitespace-separated prefix expression over a library.
///
/// Tokens are resolved against the library's symbols; anything else must be
/// a numeric literal (decimal or scientific notation).
pub fn parse_prefix(text: &str, lib: &Library) -> Result<ExpressionTree, ParseError> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        if let Some(tok) = lib.find_symbol(word) {
            tokens.push(tok);
        } else if let Ok(x) = word.parse::<f64>() {
            tokens.push(Token::Lit(x));
        } else {
            return Err(ParseError::UnknownToken(word.to_string()));
        }
    }
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(build_tree(tokens)?)
}

/// Prints a traversal back to prefix notation. Constant slots print as `c`,
/// so `parse_prefix` of the output reproduces the traversal exactly.
pub fn to_prefix(tree: &ExpressionTree) -> String {
    tree.traversal()
        .iter()
        .map(|t| t.symbol())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic parenthesized infix rendering; numeric values are printed
/// with four decimal places.
pub fn to_infix(tree: &ExpressionTree, consts: &[f64]) -> String {
    assert_eq!(consts.len(), tree.n_slots(), "constant count mismatch");
    let mut slot_cursor = 0;
    let mut pos = 0;
    render(tree, consts, &mut pos, &mut slot_cursor)
}

fn render(tree: &ExpressionTree, consts: &[f64], pos: &mut usize, slot_cursor: &mut usize) -> String {
    let tok = tree.traversal()[*pos];
    *pos += 1;
    match tok {
        Token::Bin(op) => {
            let a = render(tree, consts, pos, slot_cursor);
            let b = render(tree, consts, pos, slot_cursor);
            format!("({a} {} {b})", op.infix())
        }
        Token::Un(op) => {
            let a = render(tree, consts, pos, slot_cursor);
            format!("{}({a})", op.symbol())
        }
        Token::Var(v) => v.to_string(),
        Token::Const => {
            let value = consts[tree.slot_map()[*slot_cursor]];
            *slot_cursor += 1;
            format!("{value:.4}")
        }
        Token::Lit(x) => format!("{x:.4}"),
        Token::Param(m) => format!("a{m}"),
    }
}

/// The variable tokens a traversal actually references.
pub fn variables_used(tree: &ExpressionTree) -> Vec<super::token::Var> {
    let mut out = Vec::new();
    for t in tree.traversal() {
        if let Token::Var(v) = t {
            if !out.contains(v) {
                out.push(*v);
            }
        }
    }
    out
}

/// Root positions of the top-level subtrees of a complete traversal, i.e.
/// the children of the root token.
pub fn child_positions(traversal: &[Token], root: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = root + 1;
    for _ in 0..traversal[root].arity() {
        out.push(p);
        p += subtree_len(traversal, p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::token::{BinOp, Var};

    #[test]
    fn parse_simple_sum() {
        let lib = Library::base();
        let t = parse_prefix("add x1 1.0", &lib).unwrap();
        assert_eq!(
            t.traversal(),
            &[
                Token::Bin(BinOp::Add),
                Token::Var(Var::X(1)),
                Token::Lit(1.0)
            ]
        );
    }

    #[test]
    fn parse_cube_chain() {
        let lib = Library::base();
        let t = parse_prefix("mul x1 mul x1 x1", &lib).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.n_slots(), 0);
    }

    #[test]
    fn parse_gamma1_ground_truth() {
        let lib = Library::base();
        let t = parse_prefix("add add mul x1 mul x1 x1 mul x1 x1 x1", &lib).unwrap();
        assert_eq!(t.len(), 11);
    }

    #[test]
    fn unknown_token_is_reported() {
        let lib = Library::base();
        let err = parse_prefix("add x1 x7", &lib).unwrap_err();
        assert_eq!(err, ParseError::UnknownToken("x7".to_string()));
    }

    #[test]
    fn incomplete_prefix_is_reported() {
        let lib = Library::base();
        let err = parse_prefix("add x1", &lib).unwrap_err();
        assert!(matches!(err, ParseError::Tree(_)));
    }

    #[test]
    fn infix_binary_with_constant() {
        let lib = Library::base();
        let t = parse_prefix("add x1 c", &lib).unwrap();
        assert_eq!(to_infix(&t, &[0.5]), "(x1 + 0.5000)");
    }

    #[test]
    fn infix_nested_unary() {
        let lib = Library::base();
        let t = parse_prefix("exp mul x1 x1", &lib).unwrap();
        assert_eq!(to_infix(&t, &[]), "exp((x1 * x1))");
    }

    #[test]
    fn prefix_round_trip_preserves_slots() {
        let lib = Library::base();
        let t = parse_prefix("add mul c x1 sin c", &lib).unwrap();
        let printed = to_prefix(&t);
        assert_eq!(printed, "add mul c x1 sin c");
        let back = parse_prefix(&printed, &lib).unwrap();
        assert_eq!(back.traversal(), t.traversal());
    }

    #[test]
    fn scientific_literals_parse() {
        let lib = Library::base();
        let t = parse_prefix("mul 2.3763e-5 x1", &lib).unwrap();
        assert_eq!(t.traversal()[1], Token::Lit(2.3763e-5));
    }
}
