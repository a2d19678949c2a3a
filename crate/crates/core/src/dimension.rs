//! Hausdorff dimension of the limit set (Bowen's equation) and of the
//! stationary measure (entropy over Lyapunov exponent).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::family::{validate, IfsInstance};
use crate::symbolic::{
    gibbs_cylinder, gibbs_expectation, pressure_periodic_with, pressure_transfer_with, PeriodicTable, Potential,
    PressureMethod, TransferOptions,
};
use crate::{DEFAULT_GRID, DEFAULT_X0};

/// Upper end of the bisection bracket.
pub const T_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowenConfig {
    pub method: PressureMethod,
    /// Transfer-matrix depth, or period length for periodic sums.
    pub depth: usize,
    /// Final bracket width.
    pub tol: f64,
    pub transfer: TransferOptions,
}

impl Default for BowenConfig {
    fn default() -> Self {
        BowenConfig {
            method: PressureMethod::Transfer,
            depth: 8,
            tol: 1e-10,
            transfer: TransferOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowenRoot {
    pub t_star: f64,
    pub bracket: (f64, f64),
    pub method: PressureMethod,
    pub depth: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionResult {
    pub bowen: BowenRoot,
    /// Entropy `h_nu`.
    pub h: f64,
    /// Lyapunov exponent `chi_nu`.
    pub chi: f64,
    pub hd_measure: f64,
    /// Cylinder length used for `h` and `chi`.
    pub n: usize,
}

/// `t -> P(t log|dT|)` with the periodic points computed once; `dT` is the
/// branch derivative, so this is decreasing in `t`.
pub struct BowenFunction<'a> {
    inst: &'a IfsInstance,
    table: PeriodicTable,
    cfg: BowenConfig,
}

impl<'a> BowenFunction<'a> {
    pub fn new(inst: &'a IfsInstance, cfg: &BowenConfig) -> Result<Self> {
        if cfg.depth == 0 {
            return Err(Error::InvalidArgument("depth must be >= 1".into()));
        }
        Ok(BowenFunction {
            inst,
            table: PeriodicTable::new(inst, cfg.depth, cfg.transfer.budget)?,
            cfg: *cfg,
        })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let phi = Potential::scaled(t, Potential::DerivativeLog);
        let est = match self.cfg.method {
            PressureMethod::Transfer => pressure_transfer_with(self.inst, &phi, &self.table, &self.cfg.transfer)?,
            PressureMethod::Periodic => pressure_periodic_with(self.inst, &phi, &self.table)?,
        };
        Ok(est.value)
    }
}

/// Root of `P(t log|dT|) = 0` on `[0, T_MAX]` by bisection.
pub fn bowen_root(inst: &IfsInstance, cfg: &BowenConfig) -> Result<BowenRoot> {
    validate(inst, DEFAULT_GRID)?.require_dimension()?;
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol = {} must be positive", cfg.tol)));
    }
    let f = BowenFunction::new(inst, cfg)?;
    let (mut lo, mut hi) = (0.0, T_MAX);
    let (p_lo, p_hi) = (f.eval(lo)?, f.eval(hi)?);
    if !(p_lo > 0.0 && p_hi < 0.0) {
        return Err(Error::NoBracket { lo, hi, p_lo, p_hi });
    }
    let mut iterations = 0;
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.eval(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok(BowenRoot {
        t_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        method: cfg.method,
        depth: cfg.depth,
        iterations,
    })
}

/// The `s` with `sum r_i^s = 1`, by bisection to `1e-12`.
pub fn moran_dimension(ratios: &[f64]) -> Result<f64> {
    if ratios.is_empty() {
        return Err(Error::InvalidArgument("no ratios".into()));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::InvalidArgument(format!("ratio {r} outside (0, 1)")));
    }
    let g = |s: f64| ratios.iter().map(|&r| libm::pow(r, s)).sum::<f64>() - 1.0;
    if ratios.len() == 1 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `HD(mu) = h / chi` with `h = -int log g dnu`, `chi = -int log|dT| dnu`
/// over cylinders of length `n`, plus the Bowen root for comparison.
pub fn measure_dimension(inst: &IfsInstance, n: usize, cfg: &BowenConfig) -> Result<DimensionResult> {
    let report = validate(inst, DEFAULT_GRID)?;
    report.require_dimension()?;
    report.require_stationary()?;
    let bowen = bowen_root(inst, cfg)?;
    let (h, chi) = entropy_lyapunov(inst, n, cfg.transfer.budget)?;
    Ok(DimensionResult {
        bowen,
        h,
        chi,
        hd_measure: h / chi,
        n,
    })
}

/// `(h, chi)` from the normalised-weight cylinders of length `n`.
pub fn entropy_lyapunov(inst: &IfsInstance, n: usize, budget: usize) -> Result<(f64, f64)> {
    let cylinders = gibbs_cylinder(inst, n, DEFAULT_X0, budget)?;
    let h = -gibbs_expectation(inst, &cylinders, &Potential::WeightLog)?;
    let chi = -gibbs_expectation(inst, &cylinders, &Potential::DerivativeLog)?;
    if !(chi > 0.0) {
        return Err(Error::Precondition(format!("Lyapunov exponent {chi} is not positive")));
    }
    Ok((h, chi))
}

/// CSV columns of [`DimensionResult::row`].
pub const DIMENSION_HEADER: &str = "lambda,theta,t_star,h,chi,hd_measure,bracket_lo,bracket_hi,depth,method";

impl DimensionResult {
    pub fn row(&self, lambda: f64, theta: f64) -> alloc::string::String {
        let fields: Vec<alloc::string::String> = [lambda, theta, self.bowen.t_star, self.h, self.chi, self.hd_measure]
            .iter()
            .chain(&[self.bowen.bracket.0, self.bowen.bracket.1])
            .map(|v| format!("{v:.16e}"))
            .collect();
        format!("{},{},{}", fields.join(","), self.bowen.depth, self.bowen.method.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cantor(p: f64) -> IfsInstance {
        IfsInstance::affine(&[1.0 / 3.0, 1.0 / 3.0], &[0.0, 2.0 / 3.0], &[p, 1.0 - p]).unwrap()
    }

    #[test]
    fn moran_examples() {
        let s = moran_dimension(&[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((s - libm::log(2.0) / libm::log(3.0)).abs() < 1e-11);
        assert!((moran_dimension(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-11);
        assert_eq!(moran_dimension(&[0.25]).unwrap(), 0.0);
        assert!(moran_dimension(&[]).is_err());
        assert!(moran_dimension(&[1.5, 0.2]).is_err());
    }

    #[test]
    fn cantor_root() {
        let r = bowen_root(&cantor(0.5), &BowenConfig::default()).unwrap();
        assert!((r.t_star - libm::log(2.0) / libm::log(3.0)).abs() < 1e-6);
        assert!(r.bracket.1 - r.bracket.0 <= 1e-10);
    }

    #[test]
    fn quarter_ratio_root() {
        let inst = IfsInstance::affine(&[0.25, 0.25], &[0.0, 0.75], &[0.5, 0.5]).unwrap();
        let r = bowen_root(&inst, &BowenConfig::default()).unwrap();
        assert!((r.t_star - 0.5).abs() < 1e-6);
    }

    #[test]
    fn touching_images_are_refused() {
        let inst = IfsInstance::affine(&[0.5, 0.5], &[0.0, 0.5], &[0.5, 0.5]).unwrap();
        assert!(matches!(bowen_root(&inst, &BowenConfig::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn bernoulli_measure_dimension() {
        let r = measure_dimension(&cantor(0.5), 10, &BowenConfig::default()).unwrap();
        assert!((r.h - libm::log(2.0)).abs() < 1e-12);
        assert!((r.chi - libm::log(3.0)).abs() < 1e-12);
        assert!((r.hd_measure - r.bowen.t_star).abs() < 1e-5);
        let p = 0.3;
        let r = measure_dimension(&cantor(p), 14, &BowenConfig::default()).unwrap();
        let oracle = -(p * libm::log(p) + (1.0 - p) * libm::log(1.0 - p)) / libm::log(3.0);
        assert!((r.hd_measure - oracle).abs() < 1e-4);
        assert!(r.hd_measure <= r.bowen.t_star + 1e-4);
    }

    #[test]
    fn csv_row_shape() {
        let r = measure_dimension(&cantor(0.5), 4, &BowenConfig::default()).unwrap();
        let row = r.row(0.0, 0.5);
        assert_eq!(row.split(',').count(), DIMENSION_HEADER.split(',').count());
        assert!(row.ends_with(",8,transfer"));
    }
}
