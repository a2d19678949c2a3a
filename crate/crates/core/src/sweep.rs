//! Parameter sweeps, finite-difference smoothness diagnostics and the
//! built-in example families.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;
use core::str::FromStr;

use crate::dimension::{bowen_root, entropy_lyapunov, measure_dimension, BowenConfig};
use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::family::{bind, validate, FamilySpec, IfsInstance, Interval, Piecewise};
use crate::measure::{chaos_mean, depth_integrals};
use crate::numeric::{ls_slope, powi};
use crate::symbolic::{pressure_periodic, pressure_transfer, Potential, PressureMethod, TransferOptions};
use crate::{DEFAULT_GRID, DEFAULT_X0};

/// Preset names accepted by [`preset`].
pub const PRESETS: [&str; 4] = ["simple_4_1", "cantor", "ex_4_3", "ex_4_4"];

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Lambda,
    Theta,
    /// `lambda = theta`.
    Tied,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Lambda => "lambda",
            SweepParameter::Theta => "theta",
            SweepParameter::Tied => "tied",
        }
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParameter::Lambda),
            "theta" => Ok(SweepParameter::Theta),
            "tied" => Ok(SweepParameter::Tied),
            _ => Err(Error::InvalidArgument(format!("unknown sweep parameter '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn check(&self) -> Result<()> {
        if !(self.lo < self.hi) || self.points < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs lo < hi and at least 2 points, got [{}, {}] with {}",
                self.lo, self.hi, self.points
            )));
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Quantity {
    /// `int f dmu`; `p` in `f` is bound to `lambda`.
    Integral(Piecewise),
    BowenDimension,
    MeasureDimension,
    Pressure(Potential),
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Integral(_) => "integral",
            Quantity::BowenDimension => "bowen_dimension",
            Quantity::MeasureDimension => "measure_dimension",
            Quantity::Pressure(_) => "pressure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Depth,
    Chaos,
    Transfer,
    Periodic,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Depth => "depth",
            Engine::Chaos => "chaos",
            Engine::Transfer => "transfer",
            Engine::Periodic => "periodic",
        }
    }

    fn pressure_method(self) -> Result<PressureMethod> {
        match self {
            Engine::Transfer => Ok(PressureMethod::Transfer),
            Engine::Periodic => Ok(PressureMethod::Periodic),
            other => Err(Error::InvalidArgument(format!(
                "engine '{}' cannot compute pressure",
                other.name()
            ))),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(Engine::Depth),
            "chaos" => Ok(Engine::Chaos),
            "transfer" => Ok(Engine::Transfer),
            "periodic" => Ok(Engine::Periodic),
            _ => Err(Error::InvalidArgument(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub engine: Engine,
    /// Expansion depth, transfer depth, period length or cylinder length,
    /// depending on the engine and quantity.
    pub depth: usize,
    pub samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub tol: f64,
    pub x0: f64,
    /// Cap on `k^depth` for the depth expansion.
    pub max_nodes: usize,
    /// Aitken-accelerate the depth sequence `F_0, ..., F_n`.
    pub extrapolate: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            engine: Engine::Depth,
            depth: 16,
            samples: 1_000_000,
            burn_in: 1_000,
            seed: 0,
            tol: 1e-10,
            x0: DEFAULT_X0,
            max_nodes: 1 << 26,
            extrapolate: true,
        }
    }
}

impl EngineConfig {
    pub fn depth_or_samples(&self) -> usize {
        match self.engine {
            Engine::Chaos => self.samples,
            _ => self.depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub family: FamilySpec,
    pub parameter: SweepParameter,
    /// Value of the parameter that is not swept.
    pub lambda: f64,
    pub theta: f64,
    pub grid: Grid,
    pub quantity: Quantity,
    pub engine: EngineConfig,
    /// Parameter value of interest for diagnostics, when the family has one.
    pub probe: Option<f64>,
}

impl SweepSpec {
    /// `(lambda, theta)` at a value of the swept parameter.
    pub fn params_at(&self, v: f64) -> (f64, f64) {
        match self.parameter {
            SweepParameter::Lambda => (v, self.theta),
            SweepParameter::Theta => (self.lambda, v),
            SweepParameter::Tied => (v, v),
        }
    }

    pub fn check(&self) -> Result<()> {
        self.grid.check()?;
        self.family.check()?;
        let ranges = match self.parameter {
            SweepParameter::Lambda => vec![("lambda", self.family.lambda_range)],
            SweepParameter::Theta => vec![("theta", self.family.theta_range)],
            SweepParameter::Tied => vec![("lambda", self.family.lambda_range), ("theta", self.family.theta_range)],
        };
        for (name, range) in ranges {
            if let Some(r) = range {
                if !(r.contains(self.grid.lo) && r.contains(self.grid.hi)) {
                    return Err(Error::ParameterOutOfRange {
                        name,
                        value: if r.contains(self.grid.lo) { self.grid.hi } else { self.grid.lo },
                        lo: r.lo,
                        hi: r.hi,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn bind_at(&self, v: f64) -> Result<IfsInstance> {
        let (lambda, theta) = self.params_at(v);
        bind(&self.family, lambda, theta)
    }
}

fn e(src: &str) -> Expr {
    parse_expr(src).expect("preset expression")
}

fn example_family(n: u32) -> FamilySpec {
    let phi = format!("phi(p - 0.25, {n})");
    let maps = vec![e(&format!("p*x + {phi} + 0.01")), e(&format!("p*x + 2/3 + {phi}"))];
    let g1 = Piecewise::new(vec![0.5], vec![e("p"), e("1 - p")]).expect("preset weight");
    let g2 = Piecewise::new(vec![0.5], vec![e("1 - p"), e("p")]).expect("preset weight");
    let range = Interval { lo: 1.0 / 6.0, hi: 1.0 / 3.0 };
    FamilySpec::new(maps, vec![g1, g2])
        .expect("preset family")
        .with_lambda(range, 0.25)
        .with_theta(range, 0.25)
}

/// Integrand of the examples: `-x` on `[0, 1/2)`, `x^2` on `[1/2, 1]`.
pub fn example_integrand() -> Piecewise {
    Piecewise::new(vec![0.5], vec![e("-x"), e("x*x")]).expect("preset integrand")
}

/// The built-in families with their default sweeps.
pub fn preset(name: &str) -> Result<SweepSpec> {
    let weights = || vec![Piecewise::single(e("p")), Piecewise::single(e("1 - p"))];
    let spec = match name {
        "simple_4_1" => SweepSpec {
            family: FamilySpec::new(vec![e("p*x"), e("p*x + p")], weights())?
                .with_lambda(Interval { lo: 0.05, hi: 0.5 }, 0.5)
                .with_theta(Interval { lo: 0.05, hi: 0.95 }, 0.5),
            parameter: SweepParameter::Theta,
            lambda: 0.5,
            theta: 0.5,
            grid: Grid { lo: 0.1, hi: 0.9, points: 9 },
            quantity: Quantity::Integral(Piecewise::single(e("x"))),
            engine: EngineConfig::default(),
            probe: None,
        },
        "cantor" => SweepSpec {
            family: FamilySpec::new(vec![e("p*x"), e("p*x + 1 - p")], weights())?
                .with_lambda(Interval { lo: 0.2, hi: 0.45 }, 1.0 / 3.0)
                .with_theta(Interval { lo: 0.05, hi: 0.95 }, 0.5),
            parameter: SweepParameter::Lambda,
            lambda: 1.0 / 3.0,
            theta: 0.5,
            grid: Grid { lo: 0.2, hi: 0.45, points: 16 },
            quantity: Quantity::BowenDimension,
            engine: EngineConfig {
                engine: Engine::Transfer,
                depth: 8,
                ..EngineConfig::default()
            },
            probe: None,
        },
        "ex_4_3" | "ex_4_4" => SweepSpec {
            family: example_family(if name == "ex_4_3" { 3 } else { 1 }),
            parameter: SweepParameter::Tied,
            lambda: 0.25,
            theta: 0.25,
            grid: Grid {
                lo: 1.0 / 6.0,
                hi: 1.0 / 3.0,
                points: 81,
            },
            quantity: Quantity::Integral(example_integrand()),
            engine: EngineConfig::default(),
            probe: Some(0.25),
        },
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset '{name}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(spec)
}

/// A quantity value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub err_estimate: f64,
    /// Depth expansion only: the values at depths `n - 1` and `n - 2`.
    pub lower: Option<(f64, f64)>,
}

impl Evaluation {
    pub fn exact(value: f64) -> Self {
        Evaluation {
            value,
            err_estimate: 0.0,
            lower: None,
        }
    }
}

/// Geometric-tail estimate of `|F - F_n|` from the last three terms.
fn tail_estimate(f_n: f64, f_1: f64, f_2: f64) -> f64 {
    let (d1, d2) = (libm::fabs(f_n - f_1), libm::fabs(f_1 - f_2));
    if d1 == 0.0 {
        return 0.0;
    }
    let rho = if d2 > 0.0 { (d1 / d2).min(0.99) } else { 0.99 };
    d1 * rho / (1.0 - rho)
}

/// Aitken delta-squared transform of the sequence ending at `s[n]`.
fn aitken(s: &[f64], n: usize) -> f64 {
    let (d1, d2) = (s[n] - s[n - 1], s[n - 1] - s[n - 2]);
    let denom = d1 - d2;
    if denom == 0.0 || libm::fabs(denom) <= 64.0 * f64::EPSILON * (libm::fabs(d1) + libm::fabs(d2)) {
        return s[n];
    }
    s[n] - d1 * d1 / denom
}

/// Value, error estimate and the two preceding terms of a depth sequence.
fn depth_evaluation(sums: &[f64], extrapolate: bool) -> Evaluation {
    let n = sums.len() - 1;
    let last3 = if extrapolate {
        [aitken(sums, n), aitken(sums, n - 1), aitken(sums, n - 2)]
    } else {
        [sums[n], sums[n - 1], sums[n - 2]]
    };
    Evaluation {
        value: last3[0],
        err_estimate: tail_estimate(last3[0], last3[1], last3[2]),
        lower: Some((last3[1], last3[2])),
    }
}

/// The sweep quantity at one value of the swept parameter.
pub fn evaluate(spec: &SweepSpec, v: f64, seed: u64) -> Result<Evaluation> {
    let inst = spec.bind_at(v)?;
    let report = validate(&inst, DEFAULT_GRID)?;
    let cfg = &spec.engine;
    let bowen_cfg = |method: PressureMethod, depth: usize| BowenConfig {
        method,
        depth,
        tol: cfg.tol,
        transfer: TransferOptions::default(),
    };
    match &spec.quantity {
        Quantity::Integral(f) => {
            report.require_stationary()?;
            let f = f.bind_p(inst.lambda());
            match cfg.engine {
                Engine::Depth => {
                    let min_depth = if cfg.extrapolate { 4 } else { 2 };
                    if cfg.depth < min_depth {
                        return Err(Error::InvalidArgument(format!(
                            "depth engine needs depth >= {min_depth}"
                        )));
                    }
                    let sums = depth_integrals(&inst, cfg.x0, cfg.depth, &f, cfg.max_nodes)?;
                    Ok(depth_evaluation(&sums, cfg.extrapolate))
                }
                Engine::Chaos => {
                    let (mean, se) = chaos_mean(&inst, cfg.x0, cfg.burn_in, cfg.samples, seed, &f)?;
                    Ok(Evaluation {
                        value: mean,
                        err_estimate: se,
                        lower: None,
                    })
                }
                other => Err(Error::InvalidArgument(format!(
                    "engine '{}' cannot integrate; use depth or chaos",
                    other.name()
                ))),
            }
        }
        Quantity::BowenDimension => {
            let method = match cfg.engine {
                Engine::Depth | Engine::Chaos => PressureMethod::Transfer,
                other => other.pressure_method()?,
            };
            let root = bowen_root(&inst, &bowen_cfg(method, cfg.depth))?;
            Ok(Evaluation {
                value: root.t_star,
                err_estimate: 0.5 * (root.bracket.1 - root.bracket.0),
                lower: None,
            })
        }
        Quantity::MeasureDimension => {
            if cfg.depth < 2 {
                return Err(Error::InvalidArgument("measure dimension needs depth >= 2".into()));
            }
            let result = measure_dimension(&inst, cfg.depth, &bowen_cfg(PressureMethod::Transfer, 8))?;
            let (h, chi) = entropy_lyapunov(&inst, cfg.depth - 1, usize::MAX)?;
            Ok(Evaluation {
                value: result.hd_measure,
                err_estimate: libm::fabs(result.hd_measure - h / chi),
                lower: None,
            })
        }
        Quantity::Pressure(phi) => {
            let est = match cfg.engine.pressure_method()? {
                PressureMethod::Transfer => pressure_transfer(
                    &inst,
                    phi,
                    &TransferOptions {
                        depth: cfg.depth,
                        ..TransferOptions::default()
                    },
                )?,
                PressureMethod::Periodic => pressure_periodic(&inst, phi, cfg.depth, 1 << 24)?,
            };
            Ok(Evaluation {
                value: est.value,
                err_estimate: est.gap.unwrap_or(f64::NAN),
                lower: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub value: f64,
    pub err_estimate: f64,
    pub engine: Engine,
    pub depth_or_samples: usize,
    pub seed: u64,
    /// Failure of this grid point; the other fields are `NaN` then.
    pub error: Option<String>,
}

/// CSV columns of [`SweepRow::csv`].
pub const SWEEP_HEADER: &str = "param,value,err_estimate,engine,depth_or_samples,seed,error";

impl SweepRow {
    pub fn csv(&self) -> String {
        let error = match &self.error {
            Some(msg) => format!("\"{}\"", msg.replace('"', "\"\"")),
            None => String::new(),
        };
        format!(
            "{:.16e},{:.16e},{:.16e},{},{},{},{}",
            self.param, self.value, self.err_estimate, self.engine, self.depth_or_samples, self.seed, error
        )
    }
}

/// Row `i` of the sweep; failures are recorded in the row.
pub fn evaluate_row(spec: &SweepSpec, i: usize) -> SweepRow {
    let param = spec.grid.value(i);
    let seed = spec.engine.seed.wrapping_add(i as u64);
    let (value, err_estimate, error) = match evaluate(spec, param, seed) {
        Ok(ev) => (ev.value, ev.err_estimate, None),
        Err(err) => (f64::NAN, f64::NAN, Some(err.to_string())),
    };
    SweepRow {
        param,
        value,
        err_estimate,
        engine: spec.engine.engine,
        depth_or_samples: spec.engine.depth_or_samples(),
        seed,
        error,
    }
}

/// One row per grid point, in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.check()?;
    Ok((0..spec.grid.points).map(|i| evaluate_row(spec, i)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Bounded,
    Diverging,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Bounded => "bounded",
            Verdict::Diverging => "diverging",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// `>= -0.1` bounded, `<= -0.5` diverging.
    pub fn from_exponent(slope: f64) -> Self {
        if slope >= -0.1 {
            Verdict::Bounded
        } else if slope <= -0.5 {
            Verdict::Diverging
        } else {
            Verdict::Inconclusive
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Difference quotients at one step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderRow {
    pub h: f64,
    /// `sup |Delta^d_h F(x)| / h^d` over the probe neighbourhood.
    pub quotient: f64,
    /// Central quotient at the probe itself.
    pub at_probe: f64,
    pub forward: f64,
    pub backward: f64,
    /// Estimated contribution of evaluation error to `|Delta^d_h F| / |c|_1`.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessDiagnostic {
    pub order: usize,
    pub probe: f64,
    /// Half-width of the neighbourhood over which quotients are maximised.
    pub radius: f64,
    pub rows: Vec<LadderRow>,
    /// Least-squares slope of `log quotient` against `log h`.
    pub growth_exponent: f64,
    pub verdict: Verdict,
    /// Every row satisfied `noise < 0.01 h^d`; always true for a returned
    /// diagnostic.
    pub noise_certified: bool,
    /// Convergence ratio of the depth expansion used in the noise estimate.
    pub tail_ratio: f64,
    pub evaluations: usize,
}

/// Dyadic ladder `length * 2^-k`, `k = 5..=10`.
pub fn default_ladder(length: f64) -> Vec<f64> {
    (5..=10).map(|k| length * libm::exp2(-(k as f64))).collect()
}

fn central_stencil(order: usize) -> &'static [(i64, f64)] {
    match order {
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        _ => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Evaluation grid of a smoothness diagnostic: `probe + j h_min` for
/// `|j| <= (order + 1) h_max / h_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticPlan {
    probe: f64,
    order: usize,
    ladder: Vec<f64>,
    steps: Vec<i64>,
    h_min: f64,
    half: i64,
    radius_steps: i64,
}

impl DiagnosticPlan {
    pub fn new(probe: f64, order: usize, ladder: &[f64]) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!("order must be 1, 2 or 3, got {order}")));
        }
        if ladder.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "ladder needs at least 4 steps, got {}",
                ladder.len()
            )));
        }
        if ladder.iter().any(|h| !(*h > 0.0 && h.is_finite())) || !probe.is_finite() {
            return Err(Error::InvalidArgument("ladder steps must be positive and finite".into()));
        }
        let h_min = ladder.iter().copied().fold(f64::INFINITY, f64::min);
        let mut steps = Vec::with_capacity(ladder.len());
        for &h in ladder {
            let m = libm::round(h / h_min);
            if libm::fabs(h / h_min - m) > 1e-9 * m {
                return Err(Error::InvalidArgument(format!(
                    "ladder step {h} is not an integer multiple of the smallest step {h_min}"
                )));
            }
            steps.push(m as i64);
        }
        let radius_steps = *steps.iter().max().expect("nonempty ladder");
        Ok(DiagnosticPlan {
            probe,
            order,
            ladder: ladder.to_vec(),
            steps,
            h_min,
            half: (order as i64 + 1) * radius_steps,
            radius_steps,
        })
    }

    /// Smallest interval containing every evaluation point.
    pub fn span(&self) -> (f64, f64) {
        let r = self.half as f64 * self.h_min;
        (self.probe - r, self.probe + r)
    }

    pub fn parameters(&self) -> Vec<f64> {
        (-self.half..=self.half).map(|j| self.probe + j as f64 * self.h_min).collect()
    }

    /// Quotients, growth exponent and verdict from evaluations at
    /// [`DiagnosticPlan::parameters`].
    pub fn finish(&self, evals: &[Evaluation]) -> Result<SmoothnessDiagnostic> {
        if evals.len() != (2 * self.half + 1) as usize {
            return Err(Error::InvalidArgument(format!(
                "expected {} evaluations, got {}",
                2 * self.half + 1,
                evals.len()
            )));
        }
        let d = self.order;
        let at = |j: i64| (j + self.half) as usize;
        let values: Vec<f64> = evals.iter().map(|e| e.value).collect();
        let scale = values.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        let rounding = 8.0 * f64::EPSILON * (1.0 + scale);

        // smooth truncation error of the depth expansion, or plain noise otherwise
        let (error_field, tail_ratio) = if evals.iter().all(|e| e.lower.is_some()) {
            let mut rho = 0.0f64;
            for e in evals {
                let (f1, f2) = e.lower.expect("checked");
                let (d1, d2) = (libm::fabs(e.value - f1), libm::fabs(f1 - f2));
                if d2 > 64.0 * f64::EPSILON * (1.0 + libm::fabs(e.value)) {
                    rho = rho.max(d1 / d2);
                }
            }
            let rho = rho.min(0.999);
            let factor = rho / (1.0 - rho);
            (
                Some(evals.iter().map(|e| (e.value - e.lower.expect("checked").0) * factor).collect::<Vec<f64>>()),
                rho,
            )
        } else {
            (None, 0.0)
        };
        let plain_noise = evals.iter().fold(0.0f64, |m, e| m.max(e.err_estimate));

        let stencil = central_stencil(d);
        let norm: f64 = stencil.iter().map(|(_, c)| libm::fabs(*c)).sum();
        let mut rows = Vec::with_capacity(self.ladder.len());
        for (&h, &m) in self.ladder.iter().zip(&self.steps) {
            let hd = powi(h, d as i32);
            let apply = |field: &[f64], j: i64| -> f64 { stencil.iter().map(|(s, c)| c * field[at(j + s * m)]).sum() };
            let mut sup = 0.0f64;
            let mut noise = 0.0f64;
            for j in -self.radius_steps..=self.radius_steps {
                sup = sup.max(libm::fabs(apply(&values, j)));
                if let Some(err) = &error_field {
                    noise = noise.max(libm::fabs(apply(err, j)) / norm);
                }
            }
            if error_field.is_none() {
                noise = plain_noise;
            }
            noise += rounding;
            let limit = 0.01 * hd;
            if !(noise < limit) {
                return Err(Error::NoiseFloor {
                    h,
                    estimate: noise,
                    limit,
                });
            }
            let one_sided = |sign: i64| -> f64 {
                let mut acc = 0.0;
                for r in 0..=d {
                    let c = binomial(d, r) * if (d - r).is_multiple_of(2) { 1.0 } else { -1.0 };
                    acc += c * values[at(sign * r as i64 * m)];
                }
                if sign < 0 && d % 2 == 1 {
                    -acc / hd
                } else {
                    acc / hd
                }
            };
            rows.push(LadderRow {
                h,
                quotient: sup / hd,
                at_probe: apply(&values, 0) / hd,
                forward: one_sided(1),
                backward: one_sided(-1),
                noise,
            });
        }

        let floors: Vec<f64> = rows.iter().map(|r| rounding * norm / powi(r.h, d as i32)).collect();
        let (growth_exponent, verdict) = if rows.iter().zip(&floors).all(|(r, f)| r.quotient <= 10.0 * f) {
            (0.0, Verdict::Bounded)
        } else {
            let xs: Vec<f64> = rows.iter().map(|r| libm::log(r.h)).collect();
            let ys: Vec<f64> = rows.iter().zip(&floors).map(|(r, f)| libm::log(r.quotient.max(*f))).collect();
            let slope = ls_slope(&xs, &ys);
            (slope, Verdict::from_exponent(slope))
        };
        Ok(SmoothnessDiagnostic {
            order: d,
            probe: self.probe,
            radius: self.radius_steps as f64 * self.h_min,
            rows,
            growth_exponent,
            verdict,
            noise_certified: true,
            tail_ratio,
            evaluations: evals.len(),
        })
    }
}

/// Diagnose an arbitrary function of the parameter.
pub fn diagnose_fn<F>(f: F, probe: f64, order: usize, ladder: &[f64]) -> Result<SmoothnessDiagnostic>
where
    F: Fn(f64) -> Result<Evaluation>,
{
    let plan = DiagnosticPlan::new(probe, order, ladder)?;
    let evals = plan.parameters().into_iter().map(f).collect::<Result<Vec<_>>>()?;
    plan.finish(&evals)
}

/// Plan for `spec`, checking that every evaluation point lies in the grid.
pub fn plan_for(spec: &SweepSpec, probe: f64, order: usize, ladder: &[f64]) -> Result<DiagnosticPlan> {
    spec.check()?;
    if matches!(spec.engine.engine, Engine::Chaos) {
        return Err(Error::InvalidArgument(
            "diagnostics use a deterministic engine; chaos game is not allowed".into(),
        ));
    }
    let plan = DiagnosticPlan::new(probe, order, ladder)?;
    let (lo, hi) = plan.span();
    if lo < spec.grid.lo || hi > spec.grid.hi {
        return Err(Error::InvalidArgument(format!(
            "probe {probe} +- (order + 1) * max(h) = [{lo}, {hi}] leaves the grid [{}, {}]",
            spec.grid.lo, spec.grid.hi
        )));
    }
    Ok(plan)
}

/// Finite-difference smoothness diagnostic of the sweep quantity at `probe`.
pub fn smoothness_diagnostic(spec: &SweepSpec, probe: f64, order: usize, ladder: &[f64]) -> Result<SmoothnessDiagnostic> {
    let plan = plan_for(spec, probe, order, ladder)?;
    let evals = plan
        .parameters()
        .into_iter()
        .map(|v| evaluate(spec, v, spec.engine.seed))
        .collect::<Result<Vec<_>>>()?;
    plan.finish(&evals)
}

/// CSV columns of [`SmoothnessDiagnostic::csv_rows`].
pub const DIAGNOSTIC_HEADER: &str = "h,quotient,order,probe";

impl SmoothnessDiagnostic {
    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.rows
            .iter()
            .map(move |r| format!("{:.16e},{:.16e},{},{:.16e}", r.h, r.quotient, self.order, self.probe))
    }

    /// `key=value` summary lines.
    pub fn summary(&self) -> Vec<String> {
        vec![
            format!("verdict={}", self.verdict),
            format!("growth_exponent={}", self.growth_exponent),
            format!("noise_certified={}", self.noise_certified),
            format!("radius={}", self.radius),
            format!("tail_ratio={}", self.tail_ratio),
            format!("evaluations={}", self.evaluations),
            format!(
                "at_probe={}",
                self.rows.iter().map(|r| format!("{}", r.at_probe)).collect::<Vec<_>>().join(";")
            ),
            format!(
                "max_noise={}",
                self.rows.iter().map(|r| r.noise).fold(0.0, f64::max).to_string()
            ),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_maps() {
        let cantor = preset("cantor").unwrap();
        let inst = cantor.family.bind_default().unwrap();
        assert_eq!(inst.map(0, 0.9).unwrap(), 0.9 / 3.0);
        assert!((inst.map(1, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let ex = preset("ex_4_4").unwrap();
        assert!(ex.family.maps[0].to_string().contains("phi(p - 0.25, 1)"));
        let ex3 = preset("ex_4_3").unwrap();
        let inst = ex3.family.bind_default().unwrap();
        assert_eq!(inst.maps()[0].to_string(), "0.25 * x + 0.01");
        assert!(preset("nope").is_err());
    }

    #[test]
    fn simple_images_partition() {
        let s = preset("simple_4_1").unwrap();
        let inst = s.family.bind_default().unwrap();
        let r = validate(&inst, 1024).unwrap();
        assert_eq!(r.images, vec![(0.0, 0.5), (0.5, 1.0)]);
    }

    #[test]
    fn aitken_is_exact_on_geometric_sequences() {
        let s: Vec<f64> = (0..12).map(|n| 2.0 + 0.3 * libm::pow(-0.5, n as f64)).collect();
        let ev = depth_evaluation(&s, true);
        assert!((ev.value - 2.0).abs() < 1e-14);
        assert!(ev.err_estimate < 1e-14);
        let raw = depth_evaluation(&s, false);
        assert_eq!(raw.value, s[11]);
        assert!(raw.err_estimate >= (raw.value - 2.0).abs() * 0.5);
        let flat = [1.0; 6];
        assert_eq!(depth_evaluation(&flat, true).value, 1.0);
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = Grid { lo: 0.1, hi: 0.9, points: 9 };
        assert_eq!(g.value(0), 0.1);
        assert_eq!(g.value(8), 0.9);
        assert!((g.value(4) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn two_point_sweep() {
        let mut s = preset("simple_4_1").unwrap();
        s.grid = Grid { lo: 0.3, hi: 0.7, points: 2 };
        s.engine.depth = 8;
        let rows = run_sweep(&s).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.error.is_none()));
    }

    #[test]
    fn sweep_reports_row_failures() {
        let mut s = preset("cantor").unwrap();
        s.quantity = Quantity::Integral(Piecewise::single(e("log(x - 0.5)")));
        s.engine.engine = Engine::Depth;
        s.grid.points = 2;
        let rows = run_sweep(&s).unwrap();
        assert!(rows.iter().all(|r| r.error.is_some() && r.value.is_nan()));
        assert!(rows[0].csv().ends_with('"'));
    }

    #[test]
    fn out_of_range_grid_is_rejected() {
        let mut s = preset("ex_4_3").unwrap();
        s.grid.hi = 0.4;
        assert!(matches!(run_sweep(&s), Err(Error::ParameterOutOfRange { .. })));
    }

    #[test]
    fn cubic_is_bounded_at_order_two() {
        let d = diagnose_fn(|l| Ok(Evaluation::exact(l * l * l)), 0.5, 2, &default_ladder(1.0 / 6.0)).unwrap();
        assert_eq!(d.verdict, Verdict::Bounded);
        for r in &d.rows {
            assert!((r.at_probe - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn kink_quotients() {
        let f = |l: f64| Ok(Evaluation::exact(libm::fabs(l - 0.25)));
        let ladder = default_ladder(1.0 / 6.0);
        let d1 = diagnose_fn(f, 0.25, 1, &ladder).unwrap();
        for r in &d1.rows {
            assert!(r.at_probe.abs() < 1e-12);
            assert!((r.forward - 1.0).abs() < 1e-9);
            assert!((r.backward + 1.0).abs() < 1e-9);
        }
        assert_eq!(d1.verdict, Verdict::Bounded);
        let d2 = diagnose_fn(f, 0.25, 2, &ladder).unwrap();
        for r in &d2.rows {
            assert!((r.at_probe * r.h - 2.0).abs() < 1e-6);
        }
        assert_eq!(d2.verdict, Verdict::Diverging);
    }

    #[test]
    fn linear_function_is_bounded_despite_rounding() {
        let d = diagnose_fn(|l| Ok(Evaluation::exact(3.0 * l + 0.1)), 0.4, 3, &default_ladder(0.1)).unwrap();
        assert_eq!(d.verdict, Verdict::Bounded);
    }

    #[test]
    fn noisy_evaluations_are_refused() {
        let f = |l: f64| {
            Ok(Evaluation {
                value: l,
                err_estimate: 1e-6,
                lower: None,
            })
        };
        assert!(matches!(
            diagnose_fn(f, 0.5, 2, &default_ladder(1.0)),
            Err(Error::NoiseFloor { .. })
        ));
    }

    #[test]
    fn ladder_validation() {
        assert!(DiagnosticPlan::new(0.5, 2, &[0.1, 0.05, 0.025]).is_err());
        assert!(DiagnosticPlan::new(0.5, 4, &default_ladder(1.0)).is_err());
        assert!(DiagnosticPlan::new(0.5, 2, &[0.1, 0.07, 0.05, 0.025]).is_err());
        let plan = DiagnosticPlan::new(0.5, 2, &default_ladder(1.0)).unwrap();
        assert_eq!(plan.parameters().len(), 2 * 3 * 32 + 1);
    }

    #[test]
    fn probe_must_fit_in_grid() {
        let s = preset("ex_4_3").unwrap();
        assert!(plan_for(&s, 0.17, 2, &default_ladder(1.0 / 6.0)).is_err());
        assert!(plan_for(&s, 0.25, 2, &default_ladder(1.0 / 6.0)).is_ok());
    }
}
