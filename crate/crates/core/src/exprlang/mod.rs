//! A small arithmetic expression language for user-supplied coefficients.
//!
//! Grammar (whitespace is insignificant, identifiers are case-sensitive):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = atom [ "^" unary ] ;          (* right-associative *)
//! atom    = number | ident | call | "(" expr ")" ;
//! call    = func "(" expr { "," expr } ")" ;
//! func    = "exp" | "log" | "sin" | "cos" | "sqrt" | "pow" ;
//! ```
//!
//! `-x^2` parses as `-(x^2)` and `2^3^2` as `2^(3^2)`.

mod ast;
mod lexer;
mod parser;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use ast::{BinOp, Expr, Func};

use crate::numeric::diff;

/// Names accepted by [`parse`].
pub const DEFAULT_NAMES: &[&str] = &[
    "x", "t", "w", "u", "y", "c", "c0", "c1", "beta", "s", "k", "r", "gamma", "a", "b", "pi", "e",
];

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {offset}: found {found}, expected one of: {}", expected.join(", "))]
    Syntax {
        offset: usize,
        found: String,
        expected: Vec<String>,
    },
    #[error("unknown identifier `{name}` at byte {offset}; allowed: {}", allowed.join(", "))]
    UnknownIdentifier {
        name: String,
        offset: usize,
        allowed: Vec<String>,
    },
    #[error("`{func}` at byte {offset} takes {expected} argument(s), found {found}")]
    Arity {
        func: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("expression nested too deeply at byte {offset}")]
    TooDeep { offset: usize },
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: String },
}

/// Variable bindings for evaluation. Later `set` calls overwrite earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bindings {
    vars: Vec<(String, f64)>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let mut b = Bindings::new();
        for (name, value) in pairs {
            b.set(name, value);
        }
        b
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        match self.vars.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.vars.push((name.to_string(), value)),
        }
        self
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Parses with the [`DEFAULT_NAMES`] vocabulary.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    parse_with(source, DEFAULT_NAMES)
}

/// Parses, rejecting identifiers outside `allowed`.
pub fn parse_with(source: &str, allowed: &[&str]) -> Result<Expr, ParseError> {
    parser::Parser::new(source, Some(allowed))?.parse()
}

/// Parses, accepting any identifier as a variable.
pub fn parse_any(source: &str) -> Result<Expr, ParseError> {
    parser::Parser::new(source, None)?.parse()
}

/// Fourth-order central difference of `e` along `var` at `point`.
/// Default step is `1e-5 · max(1, |point[var]|)`. Returns exactly 0 when
/// `var` does not occur in `e`.
pub fn partial(e: &Expr, var: &str, point: &Bindings, h: Option<f64>) -> Result<f64, EvalError> {
    if !e.mentions(var) {
        return Ok(0.0);
    }
    let at = point
        .get(var)
        .ok_or_else(|| EvalError::Unbound(var.to_string()))?;
    let h = h.unwrap_or_else(|| diff::step(diff::FIRST_STEP, at));
    diff::first(
        |v| {
            let mut env = point.clone();
            env.set(var, v);
            e.eval(&env)
        },
        at,
        h,
    )
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let source = String::deserialize(deserializer)?;
        parse_any(&source).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_any(s)
    }
}
