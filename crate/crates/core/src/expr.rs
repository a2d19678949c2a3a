//! Expression language for maps, weights and integrands.
//!
//! Expressions are built over the variables `x` (position in `[0, 1]`) and `p`
//! (the family parameter). Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | 'x' | 'p' | func '(' args ')' | '(' expr ')' | '-' factor
//! func   := sin | cos | exp | log | abs | pow | phi
//! ```
//!
//! `pow(e, k)` takes an integer literal `k`. `phi(u, n)` is
//! `u^(n+1) * sin(1/u)` with `phi(0, n) = 0` and integer `n >= 1`; an optional
//! third integer `phi(u, n, d)` denotes its `d`-th derivative in `u`, which is
//! what [`Expr::diff_x`] produces.

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{EvalError, ParseError, ParseErrorKind};
use crate::numeric::powi;

/// Below this magnitude `phi` and its derivatives evaluate to 0.
const PHI_ZERO: f64 = 1e-300;
const MAX_PHI_ORDER: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }

    fn apply(self, v: f64) -> Result<f64, EvalError> {
        match self {
            Func::Sin => Ok(libm::sin(v)),
            Func::Cos => Ok(libm::cos(v)),
            Func::Exp => Ok(libm::exp(v)),
            Func::Log if v <= 0.0 => Err(EvalError::LogDomain(v)),
            Func::Log => Ok(libm::log(v)),
            Func::Abs => Ok(libm::fabs(v)),
        }
    }
}

/// Scalar expression in `x` and `p`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    P,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Func(Func, Box<Expr>),
    /// `order`-th derivative of `u^(n+1) sin(1/u)`.
    Phi { arg: Box<Expr>, n: u32, order: u32 },
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn eval(&self, x: f64, p: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::P => p,
            Expr::Neg(a) => -a.eval(x, p)?,
            Expr::Add(a, b) => a.eval(x, p)? + b.eval(x, p)?,
            Expr::Sub(a, b) => a.eval(x, p)? - b.eval(x, p)?,
            Expr::Mul(a, b) => a.eval(x, p)? * b.eval(x, p)?,
            Expr::Div(a, b) => {
                let num = a.eval(x, p)?;
                let den = b.eval(x, p)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(a, k) => {
                let base = a.eval(x, p)?;
                if base == 0.0 && *k < 0 {
                    return Err(EvalError::ZeroToNegativePower);
                }
                powi(base, *k)
            }
            Expr::Func(f, a) => f.apply(a.eval(x, p)?)?,
            Expr::Phi { arg, n, order } => phi_derivative(arg.eval(x, p)?, *n, *order),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Expr::X => true,
            Expr::Num(_) | Expr::P => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.depends_on_x(),
            Expr::Phi { arg, .. } => arg.depends_on_x(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_x() || b.depends_on_x()
            }
        }
    }

    pub fn depends_on_p(&self) -> bool {
        match self {
            Expr::P => true,
            Expr::Num(_) | Expr::X => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.depends_on_p(),
            Expr::Phi { arg, .. } => arg.depends_on_p(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_p() || b.depends_on_p()
            }
        }
    }

    /// Whether the expression contains `abs` or `phi`, whose derivatives are
    /// undefined (abs) or discontinuous (phi) at zero argument.
    pub fn has_kinks(&self) -> bool {
        match self {
            Expr::Func(Func::Abs, _) | Expr::Phi { .. } => true,
            Expr::Num(_) | Expr::X | Expr::P => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.has_kinks(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.has_kinks() || b.has_kinks()
            }
        }
    }

    /// Replace `p` by a constant and fold.
    pub fn bind_p(&self, p: f64) -> Expr {
        self.substitute_p(p).simplify()
    }

    fn substitute_p(&self, p: f64) -> Expr {
        self.map_leaves(&|e| match e {
            Expr::P => Expr::Num(p),
            other => other.clone(),
        })
    }

    fn map_leaves(&self, f: &dyn Fn(&Expr) -> Expr) -> Expr {
        match self {
            Expr::Num(_) | Expr::X | Expr::P => f(self),
            Expr::Neg(a) => Expr::Neg(Box::new(a.map_leaves(f))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.map_leaves(f)), Box::new(b.map_leaves(f))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.map_leaves(f)), Box::new(b.map_leaves(f))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.map_leaves(f)), Box::new(b.map_leaves(f))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.map_leaves(f)), Box::new(b.map_leaves(f))),
            Expr::Pow(a, k) => Expr::Pow(Box::new(a.map_leaves(f)), *k),
            Expr::Func(g, a) => Expr::Func(*g, Box::new(a.map_leaves(f))),
            Expr::Phi { arg, n, order } => Expr::Phi {
                arg: Box::new(arg.map_leaves(f)),
                n: *n,
                order: *order,
            },
        }
    }

    /// Structural derivative with respect to `x`, simplified.
    pub fn diff_x(&self) -> Expr {
        self.derivative().simplify()
    }

    fn derivative(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) | P => Num(0.0),
            X => Num(1.0),
            Neg(a) => Neg(Box::new(a.derivative())),
            Add(a, b) => Add(Box::new(a.derivative()), Box::new(b.derivative())),
            Sub(a, b) => Sub(Box::new(a.derivative()), Box::new(b.derivative())),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.derivative()), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.derivative()))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.derivative()), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.derivative()))),
                )),
                Box::new(Pow(b.clone(), 2)),
            ),
            Pow(a, k) => Mul(
                Box::new(Mul(Box::new(Num(*k as f64)), Box::new(Pow(a.clone(), k - 1)))),
                Box::new(a.derivative()),
            ),
            Func(f, a) => {
                let inner = a.derivative();
                let outer = match f {
                    self::Func::Sin => Func(self::Func::Cos, a.clone()),
                    self::Func::Cos => Neg(Box::new(Func(self::Func::Sin, a.clone()))),
                    self::Func::Exp => Func(self::Func::Exp, a.clone()),
                    self::Func::Log => Div(Box::new(Num(1.0)), a.clone()),
                    // u / |u|: a division error at u = 0
                    self::Func::Abs => Div(a.clone(), Box::new(Func(self::Func::Abs, a.clone()))),
                };
                Mul(Box::new(outer), Box::new(inner))
            }
            Phi { arg, n, order } => Mul(
                Box::new(Phi {
                    arg: arg.clone(),
                    n: *n,
                    order: order + 1,
                }),
                Box::new(arg.derivative()),
            ),
        }
    }

    /// Constant folding and algebraic identities (`0 + e`, `1 * e`, ...).
    pub fn simplify(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) | X | P => self.clone(),
            Neg(a) => match a.simplify() {
                Num(v) => Num(-v),
                Neg(inner) => *inner,
                s => Neg(Box::new(s)),
            },
            Add(a, b) => match (a.simplify(), b.simplify()) {
                (Num(u), Num(v)) => fold2(u + v, Num(u), Num(v), Add),
                (Num(0.0), e) | (e, Num(0.0)) => e,
                (u, Neg(v)) => Sub(Box::new(u), v),
                (u, v) => Add(Box::new(u), Box::new(v)),
            },
            Sub(a, b) => match (a.simplify(), b.simplify()) {
                (Num(u), Num(v)) => fold2(u - v, Num(u), Num(v), Sub),
                (e, Num(0.0)) => e,
                (Num(0.0), e) => Neg(Box::new(e)).simplify(),
                (u, Neg(v)) => Add(Box::new(u), v),
                (u, v) => Sub(Box::new(u), Box::new(v)),
            },
            Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Num(u), Num(v)) => fold2(u * v, Num(u), Num(v), Mul),
                (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
                (Num(o), e) | (e, Num(o)) if o == 1.0 => e,
                (Num(m), e) | (e, Num(m)) if m == -1.0 => Neg(Box::new(e)).simplify(),
                (u, v) => Mul(Box::new(u), Box::new(v)),
            },
            Div(a, b) => match (a.simplify(), b.simplify()) {
                (Num(u), Num(v)) if v != 0.0 => fold2(u / v, Num(u), Num(v), Div),
                (Num(z), d) if z == 0.0 && !matches!(d, Num(_)) => Num(0.0),
                (e, Num(1.0)) => e,
                (u, v) => Div(Box::new(u), Box::new(v)),
            },
            Pow(a, k) => match (a.simplify(), *k) {
                (_, 0) => Num(1.0),
                (e, 1) => e,
                (Num(v), k) if !(v == 0.0 && k < 0) => {
                    let r = powi(v, k);
                    if r.is_finite() {
                        Num(r)
                    } else {
                        Pow(Box::new(Num(v)), k)
                    }
                }
                (e, k) => Pow(Box::new(e), k),
            },
            Func(f, a) => match a.simplify() {
                Num(v) => match f.apply(v) {
                    Ok(r) if r.is_finite() => Num(r),
                    _ => Func(*f, Box::new(Num(v))),
                },
                s => Func(*f, Box::new(s)),
            },
            Phi { arg, n, order } => match arg.simplify() {
                Num(v) => {
                    let r = phi_derivative(v, *n, *order);
                    if r.is_finite() {
                        Num(r)
                    } else {
                        Phi {
                            arg: Box::new(Num(v)),
                            n: *n,
                            order: *order,
                        }
                    }
                }
                s => Phi {
                    arg: Box::new(s),
                    n: *n,
                    order: *order,
                },
            },
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 3,
            _ => 4,
        }
    }
}

fn fold2(result: f64, a: Expr, b: Expr, ctor: fn(Box<Expr>, Box<Expr>) -> Expr) -> Expr {
    if result.is_finite() {
        Expr::Num(result)
    } else {
        ctor(Box::new(a), Box::new(b))
    }
}

/// `d^order/du^order [u^(n+1) sin(1/u)]`, with value 0 at `u = 0`.
pub fn phi_derivative(u: f64, n: u32, order: u32) -> f64 {
    if libm::fabs(u) < PHI_ZERO {
        return 0.0;
    }
    // Terms c * u^e * trig(1/u); trig is sin (false) or cos (true).
    let mut terms: Vec<(f64, i32, bool)> = alloc::vec![(1.0, n as i32 + 1, false)];
    for _ in 0..order {
        let mut next: Vec<(f64, i32, bool)> = Vec::with_capacity(terms.len() * 2);
        for &(c, e, is_cos) in &terms {
            if e != 0 {
                push_term(&mut next, c * e as f64, e - 1, is_cos);
            }
            // d/du trig(1/u) = -u^-2 trig'(1/u); sin' = cos, cos' = -sin
            if is_cos {
                push_term(&mut next, c, e - 2, false);
            } else {
                push_term(&mut next, -c, e - 2, true);
            }
        }
        terms = next;
    }
    let inv = 1.0 / u;
    let (s, c) = (libm::sin(inv), libm::cos(inv));
    terms
        .iter()
        .map(|&(coef, e, is_cos)| coef * powi(u, e) * if is_cos { c } else { s })
        .sum()
}

fn push_term(terms: &mut Vec<(f64, i32, bool)>, c: f64, e: i32, is_cos: bool) {
    if let Some(t) = terms.iter_mut().find(|t| t.1 == e && t.2 == is_cos) {
        t.0 += c;
    } else {
        terms.push((c, e, is_cos));
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if self.precedence() == 3 {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::X => f.write_str("x"),
            Expr::P => f.write_str("p"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_operand(f, a, 3)
            }
            Expr::Add(a, b) => write_binary(f, a, "+", b, 1),
            Expr::Sub(a, b) => write_binary(f, a, "-", b, 1),
            Expr::Mul(a, b) => write_binary(f, a, "*", b, 2),
            Expr::Div(a, b) => write_binary(f, a, "/", b, 2),
            Expr::Pow(a, k) => write!(f, "pow({a}, {k})"),
            Expr::Func(g, a) => write!(f, "{}({a})", g.name()),
            Expr::Phi { arg, n, order } => {
                if *order == 0 {
                    write!(f, "phi({arg}, {n})")
                } else {
                    write!(f, "phi({arg}, {n}, {order})")
                }
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_binary(f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr, prec: u8) -> fmt::Result {
    write_operand(f, a, prec)?;
    write!(f, " {op} ")?;
    // left-associative: a right operand of equal precedence needs parentheses
    write_operand(f, b, prec + 1)
}

impl core::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

/// Parse an expression.
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        src: source,
        bytes: source.as_bytes(),
        pos: 0,
    };
    let e = parser.expr()?;
    parser.skip_ws();
    if parser.pos < parser.bytes.len() {
        return Err(parser.unexpected());
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn err(&self, offset: usize, kind: ParseErrorKind) -> ParseError {
        ParseError { offset, kind }
    }

    /// Error for the current position: either a stray character or the end of
    /// input, reported where the non-blank input stops.
    fn unexpected(&self) -> ParseError {
        match self.src[self.pos..].chars().next() {
            Some(c) => self.err(self.pos, ParseErrorKind::UnexpectedChar(c)),
            None => self.err(self.src.trim_end().len(), ParseErrorKind::UnexpectedEnd),
        }
    }

    fn expect(&mut self, ch: u8) -> Result<(), ParseError> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            _ => Err(self.unexpected()),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.bytes.len() && p.bytes[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.bytes.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.bytes.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| self.err(start, ParseErrorKind::InvalidNumber))
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.bytes.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = &self.src[start..self.pos];
        let next_is_fraction = matches!(self.bytes.get(self.pos), Some(b'.') | Some(b'e') | Some(b'E'));
        match text.parse::<i64>() {
            Ok(v) if !next_is_fraction => Ok(v),
            _ => Err(self.err(start, ParseErrorKind::ExpectedInteger)),
        }
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let func = match name {
            "x" => return Ok(Expr::X),
            "p" => return Ok(Expr::P),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "abs" => Some(Func::Abs),
            "pow" | "phi" => None,
            _ => {
                return Err(self.err(start, ParseErrorKind::UnknownIdentifier(name.to_string())));
            }
        };
        self.expect(b'(')?;
        let arg = self.expr()?;
        let e = match (func, name) {
            (Some(f), _) => Expr::Func(f, Box::new(arg)),
            (None, "pow") => {
                self.expect_comma("pow", "(expr, integer)")?;
                let at = self.pos;
                let k = self.integer()?;
                let k = i32::try_from(k).map_err(|_| self.err(at, ParseErrorKind::ExpectedInteger))?;
                Expr::Pow(Box::new(arg), k)
            }
            _ => {
                self.expect_comma("phi", "(expr, n) or (expr, n, order)")?;
                let at = self.pos;
                let n = self.integer()?;
                let order = if self.peek() == Some(b',') {
                    self.pos += 1;
                    self.integer()?
                } else {
                    0
                };
                if n < 1 || n > u32::MAX as i64 || !(0..=MAX_PHI_ORDER as i64).contains(&order) {
                    return Err(self.err(at, ParseErrorKind::PhiOrder));
                }
                Expr::Phi {
                    arg: Box::new(arg),
                    n: n as u32,
                    order: order as u32,
                }
            }
        };
        self.expect(b')')?;
        Ok(e)
    }

    fn expect_comma(&mut self, name: &'static str, expected: &'static str) -> Result<(), ParseError> {
        if self.peek() == Some(b',') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(self.pos, ParseErrorKind::Arity { name, expected }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn parses_affine_map() {
        let e = p("p*x + 0.01");
        assert_eq!(
            e,
            Expr::Add(
                Box::new(Expr::Mul(Box::new(Expr::P), Box::new(Expr::X))),
                Box::new(Expr::Num(0.01))
            )
        );
    }

    #[test]
    fn parses_phi_node() {
        let e = p("phi(p - 0.25, 3) + p*x + 0.01");
        let Expr::Add(lhs, _) = &e else { panic!("{e:?}") };
        let Expr::Add(phi, _) = lhs.as_ref() else { panic!("{lhs:?}") };
        assert!(matches!(phi.as_ref(), Expr::Phi { n: 3, order: 0, .. }));
    }

    #[test]
    fn dangling_operator_reports_offset() {
        let err = parse_expr("x/ ").unwrap_err();
        assert_eq!(err.offset, 2);
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
    }

    #[test]
    fn unknown_identifier() {
        let err = parse_expr("2*y").unwrap_err();
        assert_eq!(err.offset, 2);
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("y".into()));
    }

    #[test]
    fn stray_characters() {
        assert_eq!(parse_expr("x $").unwrap_err().offset, 2);
        assert_eq!(parse_expr("(x").unwrap_err().kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!(parse_expr("pow(x, 1.5)").unwrap_err().kind, ParseErrorKind::ExpectedInteger);
        assert_eq!(parse_expr("phi(x, 0)").unwrap_err().kind, ParseErrorKind::PhiOrder);
        assert!(matches!(parse_expr("pow(x)").unwrap_err().kind, ParseErrorKind::Arity { .. }));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 - 2 - 3").eval(0.0, 0.0), Ok(-4.0));
        assert_eq!(p("8 / 4 / 2").eval(0.0, 0.0), Ok(1.0));
        assert_eq!(p("2 + 3 * 4").eval(0.0, 0.0), Ok(14.0));
        assert_eq!(p("-x*2").eval(3.0, 0.0), Ok(-6.0));
        assert_eq!(p("2/3").eval(0.0, 0.0), Ok(2.0 / 3.0));
        assert_eq!(p("1e-3 + .5").eval(0.0, 0.0), Ok(0.501));
    }

    #[test]
    fn domain_errors() {
        assert_eq!(p("1/x").eval(0.0, 0.0), Err(EvalError::DivisionByZero));
        assert!(matches!(p("log(x)").eval(-1.0, 0.0), Err(EvalError::LogDomain(_))));
        assert_eq!(p("pow(x, -1)").eval(0.0, 0.0), Err(EvalError::ZeroToNegativePower));
        assert_eq!(p("exp(exp(x))").eval(10.0, 0.0), Err(EvalError::NonFinite));
    }

    #[test]
    fn phi_convention_at_zero() {
        assert_eq!(p("phi(x, 3)").eval(0.0, 0.0), Ok(0.0));
        assert_eq!(p("phi(p - 0.25, 3)").eval(0.7, 0.25), Ok(0.0));
        let u: f64 = 0.1;
        let expected = u.powi(4) * (1.0 / u).sin();
        assert!((p("phi(x, 3)").eval(u, 0.0).unwrap() - expected).abs() < 1e-18);
    }

    #[test]
    fn derivative_of_affine_map_prints_p() {
        assert_eq!(format!("{}", p("p*x + 0.01").diff_x()), "p");
        assert_eq!(format!("{}", p("3.0").diff_x()), "0");
        assert_eq!(p("x/3 + 2/3").diff_x(), Expr::Num(1.0 / 3.0));
    }

    #[test]
    fn derivative_of_x2_sin_inv_x() {
        let d = p("x*x*sin(1/x)").diff_x();
        let x: f64 = 0.5;
        let expected = 2.0 * x * (1.0 / x).sin() + x * x * (1.0 / x).cos() * (-1.0 / (x * x));
        assert!((d.eval(x, 0.0).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn phi_derivative_matches_closed_form() {
        // d/du u^4 sin(1/u) = 4u^3 sin(1/u) - u^2 cos(1/u)
        let u: f64 = 0.3;
        let closed = 4.0 * u.powi(3) * (1.0 / u).sin() - u * u * (1.0 / u).cos();
        assert!((phi_derivative(u, 3, 1) - closed).abs() < 1e-15);
        assert_eq!(phi_derivative(0.0, 1, 1), 0.0);
    }

    #[test]
    fn abs_derivative_fails_at_zero() {
        let d = p("abs(x - 0.5)").diff_x();
        assert_eq!(d.eval(0.75, 0.0), Ok(1.0));
        assert_eq!(d.eval(0.25, 0.0), Ok(-1.0));
        assert_eq!(d.eval(0.5, 0.0), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn bind_folds_parameter_terms() {
        let e = p("p*x + phi(p - 0.25, 3) + 0.01").bind_p(0.25);
        assert_eq!(format!("{e}"), "0.25 * x + 0.01");
        assert!(!e.depends_on_p());
    }

    #[test]
    fn printer_round_trips() {
        for src in [
            "p*x + 0.01",
            "x - (x - 1)",
            "x / (2 / x)",
            "-(x + 1) * 3",
            "pow(x - 0.5, -2) + phi(x, 2, 1)",
            "abs(sin(x)) - -x",
            "exp(log(x + 1))",
        ] {
            let e = p(src);
            let printed = format!("{e}");
            let back = p(&printed);
            for &x in &[0.1, 0.37, 0.9] {
                assert_eq!(e.eval(x, 0.2), back.eval(x, 0.2), "{src} -> {printed}");
            }
        }
        // negative constants produced by folding print with parentheses
        let e = Expr::Sub(Box::new(Expr::X), Box::new(Expr::Num(-0.5)));
        assert_eq!(format!("{e}"), "x - (-0.5)");
        assert_eq!(p(&format!("{e}")).eval(1.0, 0.0), Ok(1.5));
    }
}
