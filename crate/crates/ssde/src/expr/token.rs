use std::fmt;

use thiserror::Error;

/// Binary operators of the base library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    pub fn infix(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

/// Unary operators of the base library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Sin,
    Cos,
    Exp,
    Log,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Sin => "sin",
            UnOp::Cos => "cos",
            UnOp::Exp => "exp",
            UnOp::Log => "log",
        }
    }

    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnOp::Sin => a.sin(),
            UnOp::Cos => a.cos(),
            UnOp::Exp => a.exp(),
            UnOp::Log => a.ln(),
        }
    }

    /// True for the trigonometric operators, which the sampler forbids from
    /// nesting inside each other.
    pub fn is_trig(self) -> bool {
        matches!(self, UnOp::Sin | UnOp::Cos)
    }
}

/// Input variables: spatial coordinates `x1..x9` and time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(u8),
    T,
}

impl Var {
    pub fn parse(s: &str) -> Option<Var> {
        if s == "t" {
            return Some(Var::T);
        }
        let digits = s.strip_prefix('x')?;
        let n: u8 = digits.parse().ok()?;
        if (1..=9).contains(&n) {
            Some(Var::X(n))
        } else {
            None
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(n) => write!(f, "x{n}"),
            Var::T => write!(f, "t"),
        }
    }
}

/// One node of a pre-order traversal.
///
/// `Const` is an unfilled constant slot; its value lives outside the
/// traversal and is bound at evaluation time. `Param` is a placeholder used
/// only by the recursive per-dimension solver; the sampler never emits it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Token {
    Bin(BinOp),
    Un(UnOp),
    Var(Var),
    Const,
    Lit(f64),
    Param(u32),
}

impl Token {
    pub fn arity(&self) -> usize {
        match self {
            Token::Bin(_) => 2,
            Token::Un(_) => 1,
            _ => 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.arity() == 0
    }

    pub fn symbol(&self) -> String {
        match self {
            Token::Bin(op) => op.symbol().to_string(),
            Token::Un(op) => op.symbol().to_string(),
            Token::Var(v) => v.to_string(),
            Token::Const => "c".to_string(),
            Token::Lit(x) => format!("{x}"),
            Token::Param(m) => format!("a{m}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LibraryError {
    #[error("duplicate token symbol `{0}` in library")]
    DuplicateSymbol(String),
    #[error("library contains no terminal token")]
    NoTerminal,
    #[error("literals and parameters cannot be library tokens")]
    UnsupportedToken,
}

/// The ordered token set the sampler draws from.
///
/// Ordering is fixed per run: it defines the index space of the policy's
/// categorical distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    tokens: Vec<Token>,
}

impl Library {
    pub fn new(tokens: Vec<Token>) -> Result<Library, LibraryError> {
        let mut seen = std::collections::HashSet::new();
        for t in &tokens {
            if matches!(t, Token::Lit(_) | Token::Param(_)) {
                return Err(LibraryError::UnsupportedToken);
            }
            if !seen.insert(t.symbol()) {
                return Err(LibraryError::DuplicateSymbol(t.symbol()));
            }
        }
        if !tokens.iter().any(|t| t.is_terminal()) {
            return Err(LibraryError::NoTerminal);
        }
        Ok(Library { tokens })
    }

    /// The base library: `{+, -, *, /, sin, cos, exp, log, x1, c}`.
    pub fn base() -> Library {
        Library {
            tokens: vec![
                Token::Bin(BinOp::Add),
                Token::Bin(BinOp::Sub),
                Token::Bin(BinOp::Mul),
                Token::Bin(BinOp::Div),
                Token::Un(UnOp::Sin),
                Token::Un(UnOp::Cos),
                Token::Un(UnOp::Exp),
                Token::Un(UnOp::Log),
                Token::Var(Var::X(1)),
                Token::Const,
            ],
        }
    }

    /// Base library extended with additional variables, in the given order.
    pub fn base_with(extra: &[Var]) -> Library {
        let mut lib = Library::base();
        for &v in extra {
            lib.tokens.push(Token::Var(v));
        }
        lib
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<Token> {
        self.tokens.get(idx).copied()
    }

    /// Index of a token within the library, if present.
    pub fn index_of(&self, tok: &Token) -> Option<usize> {
        self.tokens.iter().position(|t| t == tok)
    }

    pub fn find_symbol(&self, sym: &str) -> Option<Token> {
        self.tokens.iter().find(|t| t.symbol() == sym).copied()
    }

    pub fn variables(&self) -> Vec<Var> {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                Token::Var(v) => Some(*v),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_library_order_is_stable() {
        let lib = Library::base();
        assert_eq!(lib.len(), 10);
        assert_eq!(lib.get(0), Some(Token::Bin(BinOp::Add)));
        assert_eq!(lib.get(8), Some(Token::Var(Var::X(1))));
        assert_eq!(lib.get(9), Some(Token::Const));
    }

    #[test]
    fn duplicate_symbols_rejected() {
        let err = Library::new(vec![Token::Var(Var::X(1)), Token::Var(Var::X(1))]);
        assert_eq!(
            err,
            Err(LibraryError::DuplicateSymbol("x1".to_string()))
        );
    }

    #[test]
    fn library_needs_a_terminal() {
        let err = Library::new(vec![Token::Bin(BinOp::Add)]);
        assert_eq!(err, Err(LibraryError::NoTerminal));
    }

    #[test]
    fn var_parsing() {
        assert_eq!(Var::parse("x3"), Some(Var::X(3)));
        assert_eq!(Var::parse("t"), Some(Var::T));
        assert_eq!(Var::parse("x0"), None);
        assert_eq!(Var::parse("x10"), None);
        assert_eq!(Var::parse("y1"), None);
    }
}
