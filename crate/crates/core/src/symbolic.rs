//! Symbolic dynamics over `{1, ..., k}`: words, the projection to the limit
//! set, potentials, pressure and Gibbs cylinder weights.
//!
//! Symbols are stored 0-based and printed 1-based. Words of length `n` are
//! enumerated lexicographically with the first symbol most significant.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, EvalError, Result};
use crate::family::{IfsInstance, ValidationReport};
use crate::measure::Integrand;
use crate::numeric::{checked_pow, CompensatedSum};

/// Iteration cap for periodic projections.
pub const MAX_CYCLE_ITERATIONS: usize = 10_000;

/// Tolerance used for periodic points inside pressure and Gibbs computations.
pub const CYCLE_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolWord {
    symbols: Vec<u8>,
    periodic: bool,
}

impl SymbolWord {
    pub fn finite(symbols: Vec<u8>) -> Result<Self> {
        Self::new(symbols, false)
    }

    /// The word repeated forever.
    pub fn periodic(symbols: Vec<u8>) -> Result<Self> {
        Self::new(symbols, true)
    }

    fn new(symbols: Vec<u8>, periodic: bool) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("empty symbol word".into()));
        }
        Ok(SymbolWord { symbols, periodic })
    }

    /// Parse 1-based digits, e.g. `"121"`.
    pub fn parse(digits: &str, periodic: bool) -> Result<Self> {
        let symbols = digits
            .chars()
            .map(|c| match c.to_digit(10) {
                Some(d) if d >= 1 => Ok(d as u8 - 1),
                _ => Err(Error::InvalidArgument(format!("bad symbol '{c}' in word \"{digits}\""))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(symbols, periodic)
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Symbol `n`, following the periodic extension when flagged.
    pub fn at(&self, n: usize) -> Option<u8> {
        if self.periodic {
            Some(self.symbols[n % self.symbols.len()])
        } else {
            self.symbols.get(n).copied()
        }
    }

    fn check_alphabet(&self, k: usize) -> Result<()> {
        match self.symbols.iter().find(|&&s| s as usize >= k) {
            Some(s) => Err(Error::InvalidArgument(format!("symbol {} outside alphabet of size {k}", s + 1))),
            None => Ok(()),
        }
    }
}

impl fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.symbols {
            write!(f, "{}", s + 1)?;
        }
        Ok(())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `sum_n (1 - delta(x_n, y_n)) / 2^n` over the compared prefix.
///
/// Two periodic words are compared exactly over their whole extensions.
pub fn shift_metric(x: &SymbolWord, y: &SymbolWord) -> Result<f64> {
    let terms = |len: usize| -> f64 {
        let mut acc = 0.0;
        let mut scale = 1.0;
        for n in 0..len {
            if x.at(n) != y.at(n) {
                acc += scale;
            }
            scale *= 0.5;
        }
        acc
    };
    match (x.periodic, y.periodic) {
        (true, true) => {
            let period = x.len() / gcd(x.len(), y.len()) * y.len();
            Ok(terms(period) / (1.0 - libm::exp2(-(period as f64))))
        }
        (true, false) => Ok(terms(y.len())),
        (false, true) => Ok(terms(x.len())),
        (false, false) if x.len() == y.len() => Ok(terms(x.len())),
        _ => Err(Error::InvalidArgument(format!(
            "finite words of different lengths {} and {}",
            x.len(),
            y.len()
        ))),
    }
}

/// `T_{s_0} o ... o T_{s_{m-1}}(x)`.
fn compose(inst: &IfsInstance, symbols: impl DoubleEndedIterator<Item = usize>, mut x: f64) -> Result<f64> {
    for s in symbols.rev() {
        x = inst.map(s, x)?;
    }
    Ok(x)
}

/// Fixed point of the cycle map, iterated from 0.
fn cycle_fixed_point(inst: &IfsInstance, symbols: &[usize], tol: f64) -> Result<f64> {
    let mut x = 0.0;
    for _ in 0..MAX_CYCLE_ITERATIONS {
        let next = compose(inst, symbols.iter().copied(), x)?;
        if libm::fabs(next - x) <= tol {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NonConvergence {
        what: "periodic projection",
        iterations: MAX_CYCLE_ITERATIONS,
    })
}

/// The point of the limit set coded by `w`.
///
/// Finite words give `T_{w_0} o ... o T_{w_{m-1}}(0)`, within `a^m` of the
/// projection of any extension; periodic words give the fixed point of their
/// cycle map.
pub fn project(inst: &IfsInstance, w: &SymbolWord, tol: f64) -> Result<f64> {
    w.check_alphabet(inst.k())?;
    let symbols: Vec<usize> = w.symbols.iter().map(|&s| s as usize).collect();
    if w.periodic {
        cycle_fixed_point(inst, &symbols, tol)
    } else {
        compose(inst, symbols.iter().copied(), 0.0)
    }
}

/// Distance bound `a^m` between a finite projection of length `m` and the
/// projection of any extension.
pub fn truncation_bound(report: &ValidationReport, m: usize) -> f64 {
    crate::numeric::powi(report.max_ratio, m as i32)
}

/// Potentials of the form `phi(x) = F(x_0, pi(sigma x))`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `log g_{x_0}(pi(sigma x))`
    WeightLog,
    /// `log |dT_{x_0}(pi(sigma x))|`
    DerivativeLog,
    Constant(f64),
    Scaled(f64, Box<Potential>),
    Sum(Box<Potential>, Box<Potential>),
}

impl Potential {
    pub fn scaled(t: f64, inner: Potential) -> Self {
        Potential::Scaled(t, Box::new(inner))
    }

    pub fn sum(a: Potential, b: Potential) -> Self {
        Potential::Sum(Box::new(a), Box::new(b))
    }

    /// Value on a sequence starting with `symbol` whose shifted tail projects
    /// to `tail`.
    pub fn local(&self, inst: &IfsInstance, symbol: usize, tail: f64) -> Result<f64> {
        match self {
            Potential::WeightLog => Ok(libm::log(inst.positive_weight(symbol, tail)?)),
            Potential::DerivativeLog => {
                let d = libm::fabs(inst.deriv(symbol, tail)?);
                if d > 0.0 {
                    Ok(libm::log(d))
                } else {
                    Err(Error::Eval {
                        what: "derivative",
                        branch: symbol,
                        x: tail,
                        source: EvalError::LogDomain(d),
                    })
                }
            }
            Potential::Constant(c) => Ok(*c),
            Potential::Scaled(t, inner) => Ok(t * inner.local(inst, symbol, tail)?),
            Potential::Sum(a, b) => Ok(a.local(inst, symbol, tail)? + b.local(inst, symbol, tail)?),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Potential::Constant(c) | Potential::Scaled(c, _) if !c.is_finite() => {
                Err(Error::InvalidArgument(format!("non-finite potential coefficient {c}")))
            }
            Potential::Scaled(_, inner) => inner.check(),
            Potential::Sum(a, b) => a.check().and(b.check()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::WeightLog => f.write_str("weight_log"),
            Potential::DerivativeLog => f.write_str("derivative_log"),
            Potential::Constant(c) => write!(f, "constant({c})"),
            Potential::Scaled(t, inner) => write!(f, "scaled({t}, {inner})"),
            Potential::Sum(a, b) => write!(f, "sum({a}, {b})"),
        }
    }
}

impl core::str::FromStr for Potential {
    type Err = Error;

    /// `weight_log | derivative_log | constant(c) | scaled(t, P) | sum(P, P)`.
    fn from_str(s: &str) -> Result<Self> {
        let (phi, rest) = parse_potential(s.trim())?;
        if !rest.trim().is_empty() {
            return Err(Error::InvalidArgument(format!("trailing input '{}' in potential", rest.trim())));
        }
        Ok(phi)
    }
}

fn bad_potential(s: &str, what: &str) -> Error {
    Error::InvalidArgument(format!("bad potential near '{s}': {what}"))
}

fn potential_number(t: &str) -> Result<(f64, &str)> {
    let end = t.find([',', ')']).ok_or_else(|| bad_potential(t, "unterminated number"))?;
    let v = t[..end].trim().parse::<f64>().map_err(|_| bad_potential(t, "expected a number"))?;
    Ok((v, &t[end..]))
}

fn potential_delim(t: &str, c: char) -> Result<&str> {
    t.trim_start().strip_prefix(c).ok_or_else(|| bad_potential(t, "missing delimiter"))
}

fn parse_potential(s: &str) -> Result<(Potential, &str)> {
    let s = s.trim_start();
    for (name, phi) in [("weight_log", Potential::WeightLog), ("derivative_log", Potential::DerivativeLog)] {
        if let Some(rest) = s.strip_prefix(name) {
            return Ok((phi, rest));
        }
    }
    let open = s.find('(').ok_or_else(|| bad_potential(s, "expected a name"))?;
    let (name, body) = (s[..open].trim(), &s[open + 1..]);
    match name {
        "constant" => {
            let (c, rest) = potential_number(body)?;
            Ok((Potential::Constant(c), potential_delim(rest, ')')?))
        }
        "scaled" => {
            let (t, rest) = potential_number(body)?;
            let (inner, rest) = parse_potential(potential_delim(rest, ',')?)?;
            Ok((Potential::scaled(t, inner), potential_delim(rest, ')')?))
        }
        "sum" => {
            let (a, rest) = parse_potential(body)?;
            let (b, rest) = parse_potential(potential_delim(rest, ',')?)?;
            Ok((Potential::sum(a, b), potential_delim(rest, ')')?))
        }
        _ => Err(bad_potential(s, "unknown potential")),
    }
}

/// `phi(w)`; periodic words are exact, finite words use the finite
/// projection of the shifted word.
pub fn eval_potential(inst: &IfsInstance, phi: &Potential, w: &SymbolWord) -> Result<f64> {
    phi.check()?;
    w.check_alphabet(inst.k())?;
    let symbols: Vec<usize> = w.symbols.iter().map(|&s| s as usize).collect();
    let tail = if w.periodic {
        let mut rotated = symbols[1..].to_vec();
        rotated.push(symbols[0]);
        cycle_fixed_point(inst, &rotated, CYCLE_TOL)?
    } else {
        compose(inst, symbols[1..].iter().copied(), 0.0)?
    };
    phi.local(inst, symbols[0], tail)
}

fn word_count(k: usize, n: usize, budget: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidArgument("word length must be >= 1".into()));
    }
    let required = checked_pow(k, n);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(required as usize)
}

fn decode(mut index: usize, k: usize, buf: &mut [usize]) {
    for slot in buf.iter_mut().rev() {
        *slot = index % k;
        index /= k;
    }
}

/// Projections `pi(w^infinity)` of every periodic word of length `n`.
#[derive(Debug, Clone)]
pub struct PeriodicTable {
    k: usize,
    n: usize,
    points: Vec<f64>,
}

impl PeriodicTable {
    pub fn new(inst: &IfsInstance, n: usize, budget: usize) -> Result<Self> {
        let k = inst.k();
        let count = word_count(k, n, budget)?;
        let mut buf = vec![0usize; n];
        let mut points = Vec::with_capacity(count);
        for index in 0..count {
            decode(index, k, &mut buf);
            points.push(cycle_fixed_point(inst, &buf, CYCLE_TOL)?);
        }
        Ok(PeriodicTable { k, n, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn word_len(&self) -> usize {
        self.n
    }

    /// `pi(w^infinity)` for the word with lexicographic index `index`.
    pub fn point(&self, index: usize) -> f64 {
        self.points[index]
    }

    /// Index of the shifted word `(w_1, ..., w_{n-1}, w_0)`.
    pub fn shift(&self, index: usize) -> usize {
        let top = self.len() / self.k;
        (index % top) * self.k + index / top
    }

    pub fn first_symbol(&self, index: usize) -> usize {
        index / (self.len() / self.k)
    }

    /// `phi(w^infinity) = phi(w_0, pi(sigma w^infinity))`.
    pub fn potential(&self, inst: &IfsInstance, phi: &Potential, index: usize) -> Result<f64> {
        phi.local(inst, self.first_symbol(index), self.points[self.shift(index)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureMethod {
    Periodic,
    Transfer,
}

impl PressureMethod {
    pub fn name(self) -> &'static str {
        match self {
            PressureMethod::Periodic => "periodic",
            PressureMethod::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureEstimate {
    pub value: f64,
    pub method: PressureMethod,
    pub depth: usize,
    /// Periodic sums: `|P_n - P_{n-1}|` (absent at `n = 1`).
    /// Transfer: width of the final Collatz-Wielandt bracket on `log rho`.
    pub gap: Option<f64>,
}

/// Settings for the transfer-matrix power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferOptions {
    pub depth: usize,
    pub iters: usize,
    pub tol: f64,
    pub budget: usize,
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions {
            depth: 8,
            iters: 10_000,
            tol: 1e-13,
            budget: 1 << 20,
        }
    }
}

fn periodic_value(inst: &IfsInstance, phi: &Potential, n: usize, budget: usize) -> Result<f64> {
    let table = PeriodicTable::new(inst, n, budget)?;
    periodic_value_from(inst, phi, &table)
}

fn periodic_value_from(inst: &IfsInstance, phi: &Potential, table: &PeriodicTable) -> Result<f64> {
    // streaming log-sum-exp in lexicographic order
    let mut max = f64::NEG_INFINITY;
    let mut acc = CompensatedSum::default();
    for index in 0..table.len() {
        let mut birkhoff = 0.0;
        let mut j = index;
        for _ in 0..table.word_len() {
            birkhoff += table.potential(inst, phi, j)?;
            j = table.shift(j);
        }
        if birkhoff > max {
            let rescale = libm::exp(max - birkhoff);
            let prev = acc.value() * rescale;
            acc = CompensatedSum::default();
            acc.add(prev);
            max = birkhoff;
        }
        acc.add(libm::exp(birkhoff - max));
    }
    Ok((max + libm::log(acc.value())) / table.word_len() as f64)
}

/// `(1/n) log sum_{sigma^n x = x} exp(S_n phi(x))`.
pub fn pressure_periodic(inst: &IfsInstance, phi: &Potential, n: usize, budget: usize) -> Result<PressureEstimate> {
    phi.check()?;
    let value = periodic_value(inst, phi, n, budget)?;
    let gap = if n > 1 {
        Some(libm::fabs(value - periodic_value(inst, phi, n - 1, budget)?))
    } else {
        None
    };
    Ok(PressureEstimate {
        value,
        method: PressureMethod::Periodic,
        depth: n,
        gap,
    })
}

/// The transfer operator restricted to functions of the first `depth` symbols.
///
/// Row `u` has one entry per symbol `i`, pointing at the word
/// `(i, u_0, ..., u_{depth-2})`, with value `exp(phi(i, pi(u^infinity)))`.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    k: usize,
    states: usize,
    /// `exp(phi - shift)`, row-major `states x k`.
    entries: Vec<f64>,
    shift: f64,
}

/// Leading eigendata of a [`TransferMatrix`].
#[derive(Debug, Clone)]
pub struct Eigen {
    pub log_value: f64,
    /// Positive right eigenvector, max-normalised.
    pub vector: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
}

impl TransferMatrix {
    pub fn new(inst: &IfsInstance, phi: &Potential, table: &PeriodicTable) -> Result<Self> {
        phi.check()?;
        let k = inst.k();
        let states = table.len();
        let mut locals = Vec::with_capacity(states * k);
        for u in 0..states {
            for i in 0..k {
                locals.push(phi.local(inst, i, table.point(u))?);
            }
        }
        let shift = locals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::InvalidArgument("potential is not finite on the periodic points".into()));
        }
        let entries = locals.iter().map(|v| libm::exp(v - shift)).collect();
        Ok(TransferMatrix { k, states, entries, shift })
    }

    #[inline]
    fn column(&self, u: usize, i: usize) -> usize {
        i * (self.states / self.k) + u / self.k
    }

    /// Power iteration from the all-ones vector, stopped when the
    /// Collatz-Wielandt bounds agree to `tol` in log scale.
    pub fn leading(&self, iters: usize, tol: f64) -> Result<Eigen> {
        let mut v = vec![1.0f64; self.states];
        let mut next = vec![0.0f64; self.states];
        for it in 1..=iters {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for u in 0..self.states {
                let row = &self.entries[u * self.k..(u + 1) * self.k];
                let mut s = 0.0;
                for (i, e) in row.iter().enumerate() {
                    s += e * v[self.column(u, i)];
                }
                let r = s / v[u];
                lo = lo.min(r);
                hi = hi.max(r);
                next[u] = s;
            }
            let scale = next.iter().copied().fold(0.0, f64::max);
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::NonConvergence {
                    what: "transfer power iteration",
                    iterations: it,
                });
            }
            for (a, b) in v.iter_mut().zip(&next) {
                *a = b / scale;
            }
            let gap = libm::log(hi) - libm::log(lo);
            if gap <= tol {
                return Ok(Eigen {
                    log_value: 0.5 * (libm::log(hi) + libm::log(lo)) + self.shift,
                    vector: v,
                    gap,
                    iterations: it,
                });
            }
        }
        Err(Error::NonConvergence {
            what: "transfer power iteration",
            iterations: iters,
        })
    }
}

/// `log` of the leading eigenvalue of the depth-`depth` transfer matrix.
pub fn pressure_transfer(inst: &IfsInstance, phi: &Potential, opts: &TransferOptions) -> Result<PressureEstimate> {
    let table = PeriodicTable::new(inst, opts.depth, opts.budget)?;
    pressure_transfer_with(inst, phi, &table, opts)
}

/// As [`pressure_transfer`], reusing precomputed periodic points.
pub fn pressure_transfer_with(
    inst: &IfsInstance,
    phi: &Potential,
    table: &PeriodicTable,
    opts: &TransferOptions,
) -> Result<PressureEstimate> {
    let eig = TransferMatrix::new(inst, phi, table)?.leading(opts.iters, opts.tol)?;
    Ok(PressureEstimate {
        value: eig.log_value,
        method: PressureMethod::Transfer,
        depth: table.word_len(),
        gap: Some(eig.gap),
    })
}

/// As [`pressure_periodic`], reusing precomputed periodic points (no gap).
pub fn pressure_periodic_with(inst: &IfsInstance, phi: &Potential, table: &PeriodicTable) -> Result<PressureEstimate> {
    Ok(PressureEstimate {
        value: periodic_value_from(inst, phi, table)?,
        method: PressureMethod::Periodic,
        depth: table.word_len(),
        gap: None,
    })
}

/// Weights of all cylinders of length `n`, indexed lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderWeights {
    k: usize,
    n: usize,
    weights: Vec<f64>,
}

impl CylinderWeights {
    pub fn word_len(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn word(&self, index: usize) -> SymbolWord {
        let mut buf = vec![0usize; self.n];
        decode(index, self.k, &mut buf);
        SymbolWord {
            symbols: buf.into_iter().map(|s| s as u8).collect(),
            periodic: false,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SymbolWord, f64)> + '_ {
        self.weights.iter().enumerate().map(|(i, &w)| (self.word(i), w))
    }

    pub fn total(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        self.weights.iter().for_each(|&w| acc.add(w));
        acc.value()
    }
}

/// `[w] -> g_{w_0}(T_{w_1} ... T_{w_{n-1}} x0) ... g_{w_{n-1}}(x0)`, the
/// cylinder weights of the normalised weight potential.
pub fn gibbs_cylinder(inst: &IfsInstance, n: usize, x0: f64, budget: usize) -> Result<CylinderWeights> {
    let k = inst.k();
    let count = word_count(k, n, budget)?;
    let mut weights = vec![0.0; count];
    fill_products(inst, x0, 1.0, n, 1, 0, &mut weights)?;
    Ok(CylinderWeights { k, n, weights })
}

fn fill_products(
    inst: &IfsInstance,
    x: f64,
    w: f64,
    remaining: usize,
    place: usize,
    index: usize,
    out: &mut [f64],
) -> Result<()> {
    if remaining == 0 {
        out[index] = w;
        return Ok(());
    }
    for i in 0..inst.k() {
        let g = inst.positive_weight(i, x)?;
        fill_products(inst, inst.map(i, x)?, w * g, remaining - 1, place * inst.k(), index + i * place, out)?;
    }
    Ok(())
}

/// Cylinder weights of the Gibbs measure of an arbitrary potential.
///
/// Uses the leading right eigenvector `h` of the depth-`opts.depth` transfer
/// matrix: `P(w_j = i | tail) ∝ exp(phi(i, pi(tail))) h(i, tail)`, with the
/// tail beyond the word represented by `x0` (point) and symbol 1 (for `h`).
pub fn gibbs_cylinder_for(
    inst: &IfsInstance,
    phi: &Potential,
    n: usize,
    x0: f64,
    opts: &TransferOptions,
) -> Result<CylinderWeights> {
    let k = inst.k();
    let count = word_count(k, n, opts.budget)?;
    let table = PeriodicTable::new(inst, opts.depth, opts.budget)?;
    let eig = TransferMatrix::new(inst, phi, &table)?.leading(opts.iters, opts.tol)?;
    let mut weights = vec![0.0; count];
    let ctx = Conditional {
        inst,
        phi,
        h: &eig.vector,
        stride: table.len() / k,
    };
    ctx.fill(x0, 1.0, n, 1, 0, 0, &mut weights)?;
    Ok(CylinderWeights { k, n, weights })
}

struct Conditional<'a> {
    inst: &'a IfsInstance,
    phi: &'a Potential,
    h: &'a [f64],
    /// `k^(depth - 1)`
    stride: usize,
}

impl Conditional<'_> {
    #[allow(clippy::too_many_arguments)]
    fn fill(&self, x: f64, w: f64, remaining: usize, place: usize, index: usize, head: usize, out: &mut [f64]) -> Result<()> {
        if remaining == 0 {
            out[index] = w;
            return Ok(());
        }
        let k = self.inst.k();
        let mut logs = vec![0.0; k];
        for (i, slot) in logs.iter_mut().enumerate() {
            *slot = self.phi.local(self.inst, i, x)? + libm::log(self.h[i * self.stride + head]);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let probs: Vec<f64> = logs.iter().map(|l| libm::exp(l - max)).collect();
        let norm: f64 = probs.iter().sum();
        for (i, p) in probs.iter().enumerate() {
            let next_head = i * (self.stride / k.max(1)) + head / k;
            let next_head = if self.stride == 1 { 0 } else { next_head };
            self.fill(self.inst.map(i, x)?, w * p / norm, remaining - 1, place * k, index + i * place, next_head, out)?;
        }
        Ok(())
    }
}

/// `sum_w weight(w) psi(w^infinity)`.
pub fn gibbs_expectation(inst: &IfsInstance, cylinders: &CylinderWeights, psi: &Potential) -> Result<f64> {
    psi.check()?;
    let table = PeriodicTable::new(inst, cylinders.n, usize::MAX)?;
    let mut acc = CompensatedSum::default();
    for (index, &w) in cylinders.weights.iter().enumerate() {
        acc.add(w * table.potential(inst, psi, index)?);
    }
    Ok(acc.value())
}

/// `int phi d nu` against the normalised-weight Gibbs cylinders.
pub fn gibbs_integral(inst: &IfsInstance, phi: &Potential, n: usize, x0: f64, budget: usize) -> Result<f64> {
    gibbs_expectation(inst, &gibbs_cylinder(inst, n, x0, budget)?, phi)
}

/// `sum_w weight(w) f(pi(w^infinity))`, the push-forward of the cylinder
/// weights to `[0, 1]`.
pub fn pushforward_integral(inst: &IfsInstance, cylinders: &CylinderWeights, f: &dyn Integrand) -> Result<f64> {
    let table = PeriodicTable::new(inst, cylinders.n, usize::MAX)?;
    let mut acc = CompensatedSum::default();
    for (index, &w) in cylinders.weights.iter().enumerate() {
        acc.add(w * f.value(table.point(index))?);
    }
    Ok(acc.value())
}

/// Both sides of `dP(phi + t psi)/dt |_{t=0} = int psi d mu_phi`.
///
/// Returns `(central finite difference of the transfer pressure, Gibbs
/// expectation of psi over cylinders of length n)`.
pub fn pressure_derivative_check(
    inst: &IfsInstance,
    phi: &Potential,
    psi: &Potential,
    h: f64,
    n: usize,
    x0: f64,
    opts: &TransferOptions,
) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    let table = PeriodicTable::new(inst, opts.depth, opts.budget)?;
    let shifted = |t: f64| Potential::sum(phi.clone(), Potential::scaled(t, psi.clone()));
    let up = pressure_transfer_with(inst, &shifted(h), &table, opts)?.value;
    let down = pressure_transfer_with(inst, &shifted(-h), &table, opts)?.value;
    let fd = (up - down) / (2.0 * h);
    let gibbs = gibbs_expectation(inst, &gibbs_cylinder_for(inst, phi, n, x0, opts)?, psi)?;
    Ok((fd, gibbs))
}

/// Comma-separated `word,weight` rows without a header.
pub fn cylinder_rows(cylinders: &CylinderWeights) -> impl Iterator<Item = String> + '_ {
    cylinders.iter().map(|(w, p)| format!("{w},{p:.16e}"))
}
