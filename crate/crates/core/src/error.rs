use alloc::string::String;
use core::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure while evaluating an expression at a point.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of non-positive value {0}")]
    LogDomain(f64),
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    UnknownIdentifier(String),
    InvalidNumber,
    ExpectedInteger,
    /// `phi` needs `n >= 1`, derivative order `<= 8`.
    PhiOrder,
    Arity { name: &'static str, expected: &'static str },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ParseErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
            ParseErrorKind::UnknownIdentifier(id) => write!(f, "unknown identifier '{id}'"),
            ParseErrorKind::InvalidNumber => f.write_str("invalid number literal"),
            ParseErrorKind::ExpectedInteger => f.write_str("expected an integer literal"),
            ParseErrorKind::PhiOrder => f.write_str("phi needs n >= 1 and derivative order <= 8"),
            ParseErrorKind::Arity { name, expected } => {
                write!(f, "{name} expects {expected}")
            }
        }
    }
}

/// Syntax error with the byte offset at which it was detected.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at offset {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} of branch {branch} failed at x = {x}: {source}")]
    Eval {
        what: &'static str,
        branch: usize,
        x: f64,
        source: EvalError,
    },
    #[error("integrand evaluation failed at x = {x}: {source}")]
    Integrand { x: f64, source: EvalError },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{name} = {value} outside declared interval [{lo}, {hi}]")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("weight of branch {branch} is {value} at x = {x}; weights must be positive")]
    NonPositiveWeight { branch: usize, x: f64, value: f64 },
    #[error("{required} atoms/words needed, budget is {budget}")]
    BudgetExceeded { required: u128, budget: usize },
    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },
    #[error("pressure does not change sign on [{lo}, {hi}]: P({lo}) = {p_lo}, P({hi}) = {p_hi}")]
    NoBracket { lo: f64, hi: f64, p_lo: f64, p_hi: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("noise floor violated at h = {h}: error estimate {estimate:e} exceeds {limit:e}")]
    NoiseFloor { h: f64, estimate: f64, limit: f64 },
}
