use std::collections::BTreeMap;

use thiserror::Error;

use super::residual::{DerivKind, ResidualError, ResidualExpr};
use crate::expr::{parse_prefix, variables_used, ExpressionTree, Library, LibraryError, ParseError, Token, Var};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("residual: {0}")]
    Residual(#[from] ResidualError),
    #[error("expression `{field}`: {source}")]
    Expr {
        field: &'static str,
        source: ParseError,
    },
    #[error("library: {0}")]
    Library(#[from] LibraryError),
    #[error("residual references {0}, which is not a declared variable")]
    UndeclaredVariable(Var),
    #[error("residual terminal {0} exceeds second order or mixes variables")]
    BadTerminal(String),
    #[error("initial_target must be present exactly when t is a variable")]
    InitialMismatch,
    #[error("variable {0} has no domain")]
    MissingDomain(Var),
    #[error("domain for {0} is empty or inverted")]
    BadDomain(Var),
}

/// One differential-equation problem: residual form, domain, Dirichlet
/// boundary data, optional initial data, token library, and (for metrics
/// only) the known exact solution.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    /// Declaration order; `t` last when present.
    pub variables: Vec<Var>,
    pub domain: BTreeMap<Var, (f64, f64)>,
    pub residual: ResidualExpr,
    pub boundary_target: ExpressionTree,
    pub initial_target: Option<ExpressionTree>,
    pub library: Library,
    pub ground_truth: Option<ExpressionTree>,
}

impl ProblemSpec {
    pub fn is_time_dependent(&self) -> bool {
        self.variables.contains(&Var::T)
    }

    pub fn spatial_vars(&self) -> Vec<Var> {
        self.variables
            .iter()
            .copied()
            .filter(|v| *v != Var::T)
            .collect()
    }

    pub fn bounds(&self, v: Var) -> (f64, f64) {
        self.domain[&v]
    }

    /// Parses the plain-text problem format: one `key value...` pair per
    /// line, `#` comments allowed.
    pub fn parse(text: &str) -> Result<ProblemSpec, SpecError> {
        let mut name = None;
        let mut variables: Option<Vec<Var>> = None;
        let mut domain: BTreeMap<Var, (f64, f64)> = BTreeMap::new();
        let mut residual_text = None;
        let mut boundary_text = None;
        let mut initial_text = None;
        let mut library_syms: Option<Vec<String>> = None;
        let mut truth_text = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).ok_or(SpecError::Line {
                line: lineno + 1,
                msg: format!("expected `key value`, got `{line}`"),
            })?;
            let rest = rest.trim();
            let err = |msg: String| SpecError::Line {
                line: lineno + 1,
                msg,
            };
            match key {
                "name" => name = Some(rest.to_string()),
                "variables" => {
                    let mut vars = Vec::new();
                    for w in rest.split_whitespace() {
                        vars.push(Var::parse(w).ok_or_else(|| err(format!("bad variable `{w}`")))?);
                    }
                    variables = Some(vars);
                }
                "domain" => {
                    let mut it = rest.split_whitespace();
                    let v = it
                        .next()
                        .and_then(Var::parse)
                        .ok_or_else(|| err("domain needs a variable".into()))?;
                    let lo: f64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("domain needs `lo hi`".into()))?;
                    let hi: f64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("domain needs `lo hi`".into()))?;
                    domain.insert(v, (lo, hi));
                }
                "library" => {
                    library_syms = Some(rest.split_whitespace().map(|s| s.to_string()).collect())
                }
                "residual" => residual_text = Some(rest.to_string()),
                "boundary_target" => boundary_text = Some(rest.to_string()),
                "initial_target" => initial_text = Some(rest.to_string()),
                "ground_truth" => truth_text = Some(rest.to_string()),
                other => return Err(err(format!("unknown field `{other}`"))),
            }
        }

        let name = name.ok_or(SpecError::MissingField("name"))?;
        let variables = variables.ok_or(SpecError::MissingField("variables"))?;
        let library_syms = library_syms.ok_or(SpecError::MissingField("library"))?;
        let residual_text = residual_text.ok_or(SpecError::MissingField("residual"))?;
        let boundary_text = boundary_text.ok_or(SpecError::MissingField("boundary_target"))?;

        let mut lib_tokens = Vec::new();
        for sym in &library_syms {
            let tok = resolve_library_symbol(sym).ok_or(SpecError::Line {
                line: 0,
                msg: format!("unknown library token `{sym}`"),
            })?;
            lib_tokens.push(tok);
        }
        let library = Library::new(lib_tokens)?;

        let residual = ResidualExpr::parse(&residual_text)?;
        let parse_expr = |field: &'static str, text: &str| {
            parse_prefix(text, &library).map_err(|source| SpecError::Expr { field, source })
        };
        let boundary_target = parse_expr("boundary_target", &boundary_text)?;
        let initial_target = initial_text
            .as_deref()
            .map(|t| parse_expr("initial_target", t))
            .transpose()?;
        let ground_truth = truth_text
            .as_deref()
            .map(|t| parse_expr("ground_truth", t))
            .transpose()?;

        let spec = ProblemSpec {
            name,
            variables,
            domain,
            residual,
            boundary_target,
            initial_target,
            library,
            ground_truth,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), SpecError> {
        for v in &self.variables {
            let (lo, hi) = *self
                .domain
                .get(v)
                .ok_or(SpecError::MissingDomain(*v))?;
            if !(lo < hi) {
                return Err(SpecError::BadDomain(*v));
            }
        }
        for k in self.residual.terminals() {
            if let Some(v) = k.var() {
                if !self.variables.contains(&v) {
                    return Err(SpecError::UndeclaredVariable(v));
                }
            }
        }
        for t in self.residual.traversal() {
            if let super::residual::ResTok::Var(v) = t {
                if !self.variables.contains(v) {
                    return Err(SpecError::UndeclaredVariable(*v));
                }
            }
        }
        if self.is_time_dependent() != self.initial_target.is_some() {
            return Err(SpecError::InitialMismatch);
        }
        for (field, tree) in [
            ("boundary_target", Some(&self.boundary_target)),
            ("initial_target", self.initial_target.as_ref()),
            ("ground_truth", self.ground_truth.as_ref()),
        ] {
            if let Some(tree) = tree {
                for v in variables_used(tree) {
                    if !self.variables.contains(&v) {
                        let _ = field;
                        return Err(SpecError::UndeclaredVariable(v));
                    }
                }
            }
        }
        Ok(())
    }

    /// Derivative terminals of the residual, for wiring checks.
    pub fn residual_terminals(&self) -> Vec<DerivKind> {
        self.residual.terminals()
    }
}

fn resolve_library_symbol(sym: &str) -> Option<Token> {
    Library::base()
        .find_symbol(sym)
        .or_else(|| Var::parse(sym).map(Token::Var))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAMMA1: &str = "\
# second-order ODE with cubic solution
name gamma01
variables x1
domain x1 -1 1
library add sub mul div sin cos exp log x1 c
residual sub u_x1x1 add mul 6 x1 2
boundary_target add add mul x1 mul x1 x1 mul x1 x1 x1
ground_truth add add mul x1 mul x1 x1 mul x1 x1 x1
";

    #[test]
    fn parses_a_minimal_problem() {
        let spec = ProblemSpec::parse(GAMMA1).unwrap();
        assert_eq!(spec.name, "gamma01");
        assert_eq!(spec.variables, vec![Var::X(1)]);
        assert!(!spec.is_time_dependent());
        assert!(spec.ground_truth.is_some());
        assert_eq!(spec.bounds(Var::X(1)), (-1.0, 1.0));
    }

    #[test]
    fn initial_requires_time() {
        let bad = GAMMA1.to_string() + "initial_target x1\n";
        assert!(matches!(
            ProblemSpec::parse(&bad),
            Err(SpecError::InitialMismatch)
        ));
    }

    #[test]
    fn undeclared_residual_variable_rejected() {
        let bad = GAMMA1.replace("residual sub u_x1x1 add mul 6 x1 2", "residual u_x2x2");
        assert!(matches!(
            ProblemSpec::parse(&bad),
            Err(SpecError::UndeclaredVariable(Var::X(2)))
        ));
    }
}
