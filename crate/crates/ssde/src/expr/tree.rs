use thiserror::Error;

use super::token::Token;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("incomplete traversal: {missing} node(s) still unfilled")]
    IncompleteTraversal { missing: usize },
    #[error("overfull traversal: tree completed at token {at} of {len}")]
    OverfullTraversal { at: usize, len: usize },
    #[error("replacement {index} is not a complete traversal")]
    ArityViolation { index: usize },
}

/// A validated expression skeleton: a complete pre-order traversal.
///
/// Constant slots are enumerated left to right. `slot_map[j]` gives, for the
/// j-th `Const` occurrence in the traversal, the index of the constant it
/// binds to. For a freshly built tree this is the identity; derivative trees
/// keep the mapping of their source so that a single constant vector serves
/// both (optimizing a constant updates the tree and all its derivatives).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTree {
    traversal: Vec<Token>,
    slot_map: Vec<usize>,
    n_slots: usize,
}

impl ExpressionTree {
    pub fn traversal(&self) -> &[Token] {
        &self.traversal
    }

    pub fn slot_map(&self) -> &[usize] {
        &self.slot_map
    }

    /// Number of distinct constants the tree binds to.
    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn len(&self) -> usize {
        self.traversal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traversal.is_empty()
    }

    /// Parameter indices appearing in the traversal, deduplicated, in order
    /// of first appearance.
    pub fn param_indices(&self) -> Vec<u32> {
        let mut seen = Vec::new();
        for t in &self.traversal {
            if let Token::Param(m) = t {
                if !seen.contains(m) {
                    seen.push(*m);
                }
            }
        }
        seen
    }

    pub(crate) fn from_parts(traversal: Vec<Token>, slot_map: Vec<usize>, n_slots: usize) -> Self {
        debug_assert_eq!(
            slot_map.len(),
            traversal.iter().filter(|t| matches!(t, Token::Const)).count()
        );
        ExpressionTree {
            traversal,
            slot_map,
            n_slots,
        }
    }
}

/// Checks the arity-counter property: starting from 1, each token adds
/// `arity - 1`; a complete traversal reaches 0 exactly at the last token.
pub fn check_complete(traversal: &[Token]) -> Result<(), TreeError> {
    let mut counter: i64 = 1;
    for (i, tok) in traversal.iter().enumerate() {
        counter += tok.arity() as i64 - 1;
        if counter == 0 && i + 1 != traversal.len() {
            return Err(TreeError::OverfullTraversal {
                at: i + 1,
                len: traversal.len(),
            });
        }
    }
    if counter != 0 {
        return Err(TreeError::IncompleteTraversal {
            missing: counter as usize,
        });
    }
    Ok(())
}

/// Validates a pre-order traversal and enumerates its constant slots.
pub fn build_tree(traversal: Vec<Token>) -> Result<ExpressionTree, TreeError> {
    check_complete(&traversal)?;
    let n_slots = traversal.iter().filter(|t| matches!(t, Token::Const)).count();
    let slot_map = (0..n_slots).collect();
    Ok(ExpressionTree {
        traversal,
        slot_map,
        n_slots,
    })
}

/// Length of the subtree rooted at `start` within a complete traversal.
pub fn subtree_len(traversal: &[Token], start: usize) -> usize {
    let mut counter: i64 = 1;
    let mut i = start;
    while counter > 0 {
        counter += traversal[i].arity() as i64 - 1;
        i += 1;
    }
    i - start
}

/// Substitutes every `Param(m)` token with `replacements[m]`, leaving all
/// other tokens in place. Replacement order follows the parameter index, not
/// traversal position. The result is re-validated, with constant slots
/// re-enumerated left to right.
pub fn replace_parameters(
    skeleton: &[Token],
    replacements: &[Vec<Token>],
) -> Result<ExpressionTree, TreeError> {
    let mut max_param: Option<u32> = None;
    for t in skeleton {
        if let Token::Param(m) = t {
            max_param = Some(max_param.map_or(*m, |x| x.max(*m)));
        }
    }
    let needed = max_param.map_or(0, |m| m as usize + 1);
    if replacements.len() != needed {
        return Err(TreeError::ArityViolation {
            index: replacements.len().min(needed),
        });
    }
    for (i, r) in replacements.iter().enumerate() {
        check_complete(r).map_err(|_| TreeError::ArityViolation { index: i })?;
    }
    let mut out = Vec::with_capacity(skeleton.len());
    for t in skeleton {
        match t {
            Token::Param(m) => out.extend_from_slice(&replacements[*m as usize]),
            other => out.push(*other),
        }
    }
    build_tree(out)
}
