use thiserror::Error;

use crate::exprlang::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{0}")]
    Domain(String),
    #[error("singular map: symmetry vanishes at x = {x}")]
    SingularMap { x: f64 },
    #[error("reduced coefficient {which} depends on y: {first} vs {second}")]
    YDependence {
        which: &'static str,
        first: f64,
        second: f64,
    },
    #[error("grid too small: {0} points, need at least 6")]
    GridTooSmall(usize),
    #[error("non-finite sample of {0}")]
    NonFinite(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{0}")]
    NoWSymmetry(String),
    #[error("non-invertible map: {0}")]
    NonInvertible(String),
    #[error("degenerate fit: every error is at or below {0:e}")]
    DegenerateFit(f64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
