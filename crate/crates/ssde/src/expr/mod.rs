//! Token library, expression trees, and pre-order traversal manipulation.

mod context;
mod parse;
mod token;
mod tree;

pub use context::{apply_constraints, parent_sibling, NoFeasibleToken, SamplerContext, StructureLimits};
pub use parse::{child_positions, parse_prefix, to_infix, to_prefix, variables_used, ParseError};
pub use token::{BinOp, Library, LibraryError, Token, UnOp, Var};
pub use tree::{build_tree, check_complete, replace_parameters, subtree_len, ExpressionTree, TreeError};
