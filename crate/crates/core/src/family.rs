//! Parameterised families of maps and weights, and their bound instances.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{Error, EvalError, Result};
use crate::expr::Expr;

/// Tolerance on `sup |sum g_i - 1|` for the normalisation verdict.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Expressions on consecutive sub-intervals of `[0, 1]`.
///
/// Piece `j` covers `[b_{j-1}, b_j)`; the last piece is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct Piecewise {
    breakpoints: Vec<f64>,
    pieces: Vec<Expr>,
}

impl Piecewise {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Expr>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidSpec(format!(
                "{} pieces need {} breakpoints, got {}",
                pieces.len(),
                pieces.len().saturating_sub(1),
                breakpoints.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidSpec("breakpoints must be finite and strictly increasing".into()));
        }
        Ok(Piecewise { breakpoints, pieces })
    }

    pub fn single(e: Expr) -> Self {
        Piecewise {
            breakpoints: Vec::new(),
            pieces: vec![e],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Expr] {
        &self.pieces
    }

    pub fn is_single(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn piece_at(&self, x: f64) -> &Expr {
        let j = self.breakpoints.partition_point(|&b| b <= x);
        &self.pieces[j]
    }

    pub fn eval(&self, x: f64, p: f64) -> core::result::Result<f64, EvalError> {
        self.piece_at(x).eval(x, p)
    }

    pub fn bind_p(&self, p: f64) -> Piecewise {
        Piecewise {
            breakpoints: self.breakpoints.clone(),
            pieces: self.pieces.iter().map(|e| e.bind_p(p)).collect(),
        }
    }
}

impl From<Expr> for Piecewise {
    fn from(e: Expr) -> Self {
        Piecewise::single(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidSpec(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A family `{T_i(x; lambda)}`, `{g_i(x; theta)}` on `[0, 1]`.
///
/// In map expressions `p` stands for `lambda`; in weight expressions it
/// stands for `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub maps: Vec<Expr>,
    pub weights: Vec<Piecewise>,
    /// `None` means undeclared, i.e. the whole real line.
    pub lambda_range: Option<Interval>,
    pub theta_range: Option<Interval>,
    pub default_lambda: f64,
    pub default_theta: f64,
}

impl FamilySpec {
    pub fn new(maps: Vec<Expr>, weights: Vec<Piecewise>) -> Result<Self> {
        let spec = FamilySpec {
            maps,
            weights,
            lambda_range: None,
            theta_range: None,
            default_lambda: 0.0,
            default_theta: 0.0,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_lambda(mut self, range: Interval, default: f64) -> Self {
        self.lambda_range = Some(range);
        self.default_lambda = default;
        self
    }

    pub fn with_theta(mut self, range: Interval, default: f64) -> Self {
        self.theta_range = Some(range);
        self.default_theta = default;
        self
    }

    pub fn k(&self) -> usize {
        self.maps.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.maps.len() < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 branches, got {}", self.maps.len())));
        }
        if self.maps.len() != self.weights.len() {
            return Err(Error::InvalidSpec(format!(
                "{} maps but {} weights",
                self.maps.len(),
                self.weights.len()
            )));
        }
        Ok(())
    }

    /// Bind at the declared defaults.
    pub fn bind_default(&self) -> Result<IfsInstance> {
        bind(self, self.default_lambda, self.default_theta)
    }
}

/// The family at fixed `(lambda, theta)`: maps, their `x`-derivatives and
/// weights, all with the parameter folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct IfsInstance {
    maps: Vec<Expr>,
    derivs: Vec<Expr>,
    weights: Vec<Piecewise>,
    lambda: f64,
    theta: f64,
    ranges_declared: bool,
}

/// Bind a family at `(lambda, theta)`.
pub fn bind(spec: &FamilySpec, lambda: f64, theta: f64) -> Result<IfsInstance> {
    spec.check()?;
    for (name, value, range) in [("lambda", lambda, spec.lambda_range), ("theta", theta, spec.theta_range)] {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be finite")));
        }
        if let Some(r) = range {
            if !r.contains(value) {
                return Err(Error::ParameterOutOfRange {
                    name,
                    value,
                    lo: r.lo,
                    hi: r.hi,
                });
            }
        }
    }
    let maps: Vec<Expr> = spec.maps.iter().map(|e| e.bind_p(lambda)).collect();
    let derivs = maps.iter().map(Expr::diff_x).collect();
    Ok(IfsInstance {
        maps,
        derivs,
        weights: spec.weights.iter().map(|w| w.bind_p(theta)).collect(),
        lambda,
        theta,
        ranges_declared: spec.lambda_range.is_some() && spec.theta_range.is_some(),
    })
}

impl IfsInstance {
    /// Instance from parameter-free maps and weights.
    pub fn from_parts(maps: Vec<Expr>, weights: Vec<Piecewise>) -> Result<Self> {
        let spec = FamilySpec::new(maps, weights)?;
        let mut inst = bind(&spec, 0.0, 0.0)?;
        inst.ranges_declared = true;
        Ok(inst)
    }

    /// Affine maps `r_i x + b_i` with constant weights.
    pub fn affine(ratios: &[f64], offsets: &[f64], weights: &[f64]) -> Result<Self> {
        let maps = ratios
            .iter()
            .zip(offsets)
            .map(|(&r, &b)| Expr::Add(alloc::boxed::Box::new(Expr::Mul(alloc::boxed::Box::new(Expr::Num(r)), alloc::boxed::Box::new(Expr::X))), alloc::boxed::Box::new(Expr::Num(b))))
            .collect();
        let weights = weights.iter().map(|&w| Piecewise::single(Expr::Num(w))).collect();
        Self::from_parts(maps, weights)
    }

    pub fn k(&self) -> usize {
        self.maps.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn maps(&self) -> &[Expr] {
        &self.maps
    }

    pub fn derivatives(&self) -> &[Expr] {
        &self.derivs
    }

    pub fn weights(&self) -> &[Piecewise] {
        &self.weights
    }

    #[inline]
    pub fn map(&self, i: usize, x: f64) -> Result<f64> {
        self.maps[i].eval(x, self.lambda).map_err(|source| Error::Eval {
            what: "map",
            branch: i,
            x,
            source,
        })
    }

    #[inline]
    pub fn deriv(&self, i: usize, x: f64) -> Result<f64> {
        self.derivs[i].eval(x, self.lambda).map_err(|source| Error::Eval {
            what: "derivative",
            branch: i,
            x,
            source,
        })
    }

    #[inline]
    pub fn weight(&self, i: usize, x: f64) -> Result<f64> {
        self.weights[i].eval(x, self.theta).map_err(|source| Error::Eval {
            what: "weight",
            branch: i,
            x,
            source,
        })
    }

    /// Weight that must be strictly positive.
    #[inline]
    pub(crate) fn positive_weight(&self, i: usize, x: f64) -> Result<f64> {
        let g = self.weight(i, x)?;
        if g > 0.0 {
            Ok(g)
        } else {
            Err(Error::NonPositiveWeight { branch: i, x, value: g })
        }
    }

    pub fn has_discontinuous_weights(&self) -> bool {
        self.weights.iter().any(|w| !w.is_single())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Piecewise weights: not continuous at the listed breakpoints.
    DiscontinuousWeights(Vec<f64>),
    /// Parameter intervals were not declared.
    UndeclaredParameterRange,
    /// `|dT_i|` was computed from expressions with `abs`/`phi` nodes.
    KinkedDerivative(usize),
}

impl core::fmt::Display for Warning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Warning::DiscontinuousWeights(b) => write!(f, "weights discontinuous at breakpoints {b:?}"),
            Warning::UndeclaredParameterRange => f.write_str("parameter interval undeclared; assuming (-inf, inf)"),
            Warning::KinkedDerivative(i) => write!(f, "map {i} contains abs/phi; derivative may be discontinuous"),
        }
    }
}

/// Grid estimates of the standing hypotheses for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub grid_n: usize,
    /// `sup |dT_i|` on the grid.
    pub lipschitz: Vec<f64>,
    /// `sup g_i` on the grid.
    pub weight_sup: Vec<f64>,
    /// `L = sum_i sup g_i * lip_i`.
    pub contraction: f64,
    pub normalization_residual: f64,
    /// Closed hull `[min T_i, max T_i]` of each image.
    pub images: Vec<(f64, f64)>,
    pub disjoint: bool,
    /// `min_i inf |dT_i|` on the grid.
    pub derivative_lower_bound: f64,
    /// `a = max_i lip_i`.
    pub max_ratio: f64,
    /// `min(1, -log a / log 2)`.
    pub holder_exponent: f64,
    pub maps_into_unit: bool,
    pub weights_positive: bool,
    /// `dT_i == dT_j` on the grid for all branches; recorded, never enforced.
    pub equal_derivatives: bool,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_contraction(&self) -> bool {
        self.contraction < 1.0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization_residual <= NORMALIZATION_TOL
    }

    /// Contraction, maps into `[0,1]` and positive weights.
    pub fn is_valid(&self) -> bool {
        self.is_contraction() && self.maps_into_unit && self.weights_positive
    }

    /// Preconditions of the stationary-measure operations.
    pub fn supports_stationary(&self) -> bool {
        self.is_valid() && self.is_normalized()
    }

    /// Preconditions of the dimension operations.
    pub fn supports_dimension(&self) -> bool {
        self.is_valid() && self.disjoint && self.derivative_lower_bound > 0.0
    }

    /// Error describing the first failed dimension precondition.
    pub fn require_dimension(&self) -> Result<()> {
        if !self.is_valid() {
            return Err(Error::Precondition(format!(
                "instance is not a valid contraction (L = {})",
                self.contraction
            )));
        }
        if !self.disjoint {
            return Err(Error::Precondition("images T_i[0,1] are not pairwise disjoint".into()));
        }
        if !(self.derivative_lower_bound > 0.0) {
            return Err(Error::Precondition("derivative lower bound is not positive".into()));
        }
        Ok(())
    }

    pub fn require_stationary(&self) -> Result<()> {
        if !self.is_valid() {
            return Err(Error::Precondition(format!(
                "instance is not a valid contraction (L = {})",
                self.contraction
            )));
        }
        if !self.is_normalized() {
            return Err(Error::Precondition(format!(
                "weights are not normalised (residual {})",
                self.normalization_residual
            )));
        }
        Ok(())
    }

    /// Human-readable summary lines, `key=value`.
    pub fn lines(&self) -> Vec<String> {
        let verdict = |b: bool| if b { "PASS" } else { "FAIL" };
        let mut out = vec![
            format!("grid_n={}", self.grid_n),
            format!("lipschitz={:?}", self.lipschitz),
            format!("weight_sup={:?}", self.weight_sup),
            format!("L={}", self.contraction),
            format!("normalization_residual={:e}", self.normalization_residual),
            format!("images={:?}", self.images),
            format!("derivative_lower_bound={}", self.derivative_lower_bound),
            format!("max_ratio={}", self.max_ratio),
            format!("holder_exponent={}", self.holder_exponent),
            format!("equal_derivatives={}", self.equal_derivatives),
            format!("contraction={}", verdict(self.is_contraction())),
            format!("maps_into_unit={}", verdict(self.maps_into_unit)),
            format!("weights_positive={}", verdict(self.weights_positive)),
            format!("normalization={}", verdict(self.is_normalized())),
            format!("disjoint={}", verdict(self.disjoint)),
            format!("derivative_bound={}", verdict(self.derivative_lower_bound > 0.0)),
            format!("valid={}", verdict(self.is_valid())),
            format!(
                "dimension_ops={}",
                if self.supports_dimension() { "available" } else { "unavailable" }
            ),
        ];
        out.extend(self.warnings.iter().map(|w| format!("warning={w}")));
        out
    }
}

/// Estimate the hypotheses on `grid_n + 1` equispaced points of `[0, 1]`.
pub fn validate(inst: &IfsInstance, grid_n: usize) -> Result<ValidationReport> {
    if grid_n < 2 {
        return Err(Error::InvalidArgument(format!("grid_n must be >= 2, got {grid_n}")));
    }
    let k = inst.k();
    let mut lipschitz = vec![0.0f64; k];
    let mut deriv_inf = vec![f64::INFINITY; k];
    let mut weight_sup = vec![f64::NEG_INFINITY; k];
    let mut images = vec![(f64::INFINITY, f64::NEG_INFINITY); k];
    let mut residual = 0.0f64;
    let mut weights_positive = true;
    let mut equal_derivatives = true;
    for j in 0..=grid_n {
        let x = j as f64 / grid_n as f64;
        let mut total = 0.0;
        let mut first_deriv = 0.0;
        for i in 0..k {
            let t = inst.map(i, x)?;
            let d = inst.deriv(i, x)?;
            let g = inst.weight(i, x)?;
            let ad = libm::fabs(d);
            lipschitz[i] = lipschitz[i].max(ad);
            deriv_inf[i] = deriv_inf[i].min(ad);
            weight_sup[i] = weight_sup[i].max(g);
            images[i].0 = images[i].0.min(t);
            images[i].1 = images[i].1.max(t);
            weights_positive &= g > 0.0;
            total += g;
            if i == 0 {
                first_deriv = d;
            } else {
                equal_derivatives &= libm::fabs(d - first_deriv) <= 1e-12;
            }
        }
        residual = residual.max(libm::fabs(total - 1.0));
    }
    let contraction = weight_sup.iter().zip(&lipschitz).map(|(g, l)| g * l).sum();
    let max_ratio = lipschitz.iter().copied().fold(0.0, f64::max);
    let holder_exponent = if max_ratio > 0.0 {
        (-libm::log(max_ratio) / core::f64::consts::LN_2).min(1.0)
    } else {
        1.0
    };
    let mut disjoint = true;
    for a in 0..k {
        for b in (a + 1)..k {
            let (ia, ib) = (images[a], images[b]);
            disjoint &= ia.1 < ib.0 || ib.1 < ia.0;
        }
    }
    let maps_into_unit = images.iter().all(|&(lo, hi)| lo >= 0.0 && hi <= 1.0);
    let mut warnings = Vec::new();
    let mut breaks: Vec<f64> = inst
        .weights()
        .iter()
        .flat_map(|w| w.breakpoints().iter().copied())
        .collect();
    if !breaks.is_empty() {
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        warnings.push(Warning::DiscontinuousWeights(breaks));
    }
    if !inst.ranges_declared {
        warnings.push(Warning::UndeclaredParameterRange);
    }
    for (i, m) in inst.maps().iter().enumerate() {
        if m.has_kinks() && m.depends_on_x() {
            warnings.push(Warning::KinkedDerivative(i));
        }
    }
    Ok(ValidationReport {
        grid_n,
        lipschitz,
        weight_sup,
        contraction,
        normalization_residual: residual,
        images,
        disjoint,
        derivative_lower_bound: deriv_inf.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio,
        holder_exponent,
        maps_into_unit,
        weights_positive,
        equal_derivatives,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn e(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    fn cantor(w1: f64, w2: f64) -> IfsInstance {
        IfsInstance::affine(&[1.0 / 3.0, 1.0 / 3.0], &[0.0, 2.0 / 3.0], &[w1, w2]).unwrap()
    }

    #[test]
    fn cantor_report() {
        let r = validate(&cantor(0.5, 0.5), 4096).unwrap();
        assert_eq!(r.lipschitz, vec![1.0 / 3.0, 1.0 / 3.0]);
        assert!((r.contraction - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(r.normalization_residual, 0.0);
        assert!(r.disjoint);
        // -log(1/3)/log 2 = 1.585 is clamped
        assert_eq!(r.holder_exponent, 1.0);
        assert!(r.supports_dimension());
        assert!(r.equal_derivatives);
    }

    #[test]
    fn touching_images_are_not_disjoint() {
        let inst = IfsInstance::affine(&[0.5, 0.5], &[0.0, 0.5], &[0.5, 0.5]).unwrap();
        let r = validate(&inst, 16).unwrap();
        assert!((r.contraction - 0.5).abs() < 1e-16);
        assert!(!r.disjoint);
        assert!(r.is_valid());
        assert!(r.require_dimension().is_err());
    }

    #[test]
    fn unnormalised_weights() {
        let r = validate(&cantor(0.6, 0.6), 64).unwrap();
        assert!((r.normalization_residual - 0.2).abs() < 1e-15);
        assert!(!r.is_normalized());
        assert!(r.require_stationary().is_err());
    }

    #[test]
    fn holder_exponent_below_one() {
        let inst = IfsInstance::affine(&[0.6, 0.3], &[0.0, 0.7], &[0.5, 0.5]).unwrap();
        let r = validate(&inst, 8).unwrap();
        assert!((r.holder_exponent - (-(0.6f64).ln() / 2f64.ln())).abs() < 1e-12);
        assert!(!r.equal_derivatives);
    }

    #[test]
    fn affine_lipschitz_is_exact_at_any_grid() {
        for n in [2, 3, 17, 1000] {
            let r = validate(&cantor(0.3, 0.7), n).unwrap();
            assert_eq!(r.lipschitz, vec![1.0 / 3.0, 1.0 / 3.0]);
        }
    }

    #[test]
    fn bind_checks_declared_ranges() {
        let spec = FamilySpec::new(vec![e("p*x"), e("p*x + 1 - p")], vec![e("p").into(), e("1 - p").into()])
            .unwrap()
            .with_lambda(Interval::new(0.1, 0.45).unwrap(), 1.0 / 3.0)
            .with_theta(Interval::new(0.05, 0.95).unwrap(), 0.5);
        let inst = bind(&spec, 1.0 / 3.0, 0.5).unwrap();
        assert!((inst.map(1, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(inst.deriv(0, 0.7).unwrap(), 1.0 / 3.0);
        assert!(matches!(bind(&spec, 0.9, 0.5), Err(Error::ParameterOutOfRange { name: "lambda", .. })));
        assert!(matches!(bind(&spec, 0.3, 1.5), Err(Error::ParameterOutOfRange { name: "theta", .. })));
    }

    #[test]
    fn undeclared_range_warns() {
        let spec = FamilySpec::new(vec![e("x/2"), e("x/2 + 0.5")], vec![e("0.5").into(), e("0.5").into()]).unwrap();
        let r = validate(&bind(&spec, 0.0, 0.0).unwrap(), 8).unwrap();
        assert!(r.warnings.contains(&Warning::UndeclaredParameterRange));
    }

    #[test]
    fn piecewise_weights_warn_and_evaluate() {
        let g1 = Piecewise::new(vec![0.5], vec![e("p"), e("1 - p")]).unwrap();
        assert_eq!(g1.eval(0.49, 0.25), Ok(0.25));
        assert_eq!(g1.eval(0.5, 0.25), Ok(0.75));
        assert_eq!(g1.eval(1.0, 0.25), Ok(0.75));
        let g2 = Piecewise::new(vec![0.5], vec![e("1 - p"), e("p")]).unwrap();
        let inst = IfsInstance::from_parts(vec![e("x/4 + 0.01"), e("x/4 + 2/3")], vec![g1.bind_p(0.25), g2.bind_p(0.25)]).unwrap();
        let r = validate(&inst, 100).unwrap();
        assert!(r.warnings.iter().any(|w| matches!(w, Warning::DiscontinuousWeights(b) if b == &vec![0.5])));
        assert!(r.is_normalized());
        assert!((r.contraction - 2.0 * 0.75 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn evaluation_failures_name_branch_and_point() {
        let inst = IfsInstance::from_parts(vec![e("x/2"), e("1/(x - 0.5) / 100")], vec![e("0.5").into(), e("0.5").into()]).unwrap();
        match validate(&inst, 4) {
            Err(Error::Eval { branch: 1, x, .. }) => assert_eq!(x, 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spec_shape_errors() {
        assert!(FamilySpec::new(vec![e("x/2")], vec![e("1").into()]).is_err());
        assert!(FamilySpec::new(vec![e("x/2"), e("x/2")], vec![e("1").into()]).is_err());
        assert!(Piecewise::new(vec![0.5, 0.4], vec![e("1"), e("1"), e("1")]).is_err());
        assert!(validate(&cantor(0.5, 0.5), 1).is_err());
    }
}
