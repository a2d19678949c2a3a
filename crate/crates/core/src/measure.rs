//! Finitely supported approximations of the stationary measure.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::family::{IfsInstance, Piecewise};
use crate::numeric::{checked_pow, CompensatedSum};
use crate::rng;

/// Default cap on the number of atoms created before merging.
pub const DEFAULT_ATOM_BUDGET: usize = 1 << 24;

/// A scalar function on `[0, 1]` that can be integrated.
pub trait Integrand {
    fn value(&self, x: f64) -> Result<f64>;
}

impl<F: Fn(f64) -> f64> Integrand for F {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(self(x))
    }
}

/// Evaluated with `p = 0`; bind the parameter first if it matters.
impl Integrand for Expr {
    fn value(&self, x: f64) -> Result<f64> {
        self.eval(x, 0.0).map_err(|source| Error::Integrand { x, source })
    }
}

impl Integrand for Piecewise {
    fn value(&self, x: f64) -> Result<f64> {
        self.eval(x, 0.0).map_err(|source| Error::Integrand { x, source })
    }
}

/// Probability measure with finitely many atoms, sorted by position.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    positions: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveConfig {
    /// Atoms lighter than this are dropped before renormalising.
    pub prune_eps: f64,
    /// Atoms within this distance of a cluster's first atom are merged.
    pub merge_tol: f64,
    pub max_atoms: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            prune_eps: 0.0,
            merge_tol: 0.0,
            max_atoms: DEFAULT_ATOM_BUDGET,
        }
    }
}

impl EvolveConfig {
    fn check(&self) -> Result<()> {
        if !(self.prune_eps >= 0.0) || !(self.merge_tol >= 0.0) {
            return Err(Error::InvalidArgument("prune_eps and merge_tol must be >= 0".into()));
        }
        Ok(())
    }
}

impl DiscreteMeasure {
    pub fn dirac(x: f64) -> Result<Self> {
        Self::from_atoms(alloc::vec![(x, 1.0)])
    }

    /// Sort, merge coincident positions and normalise.
    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::build(atoms, &EvolveConfig::default())
    }

    fn build(mut atoms: Vec<(f64, f64)>, cfg: &EvolveConfig) -> Result<Self> {
        cfg.check()?;
        for &(x, w) in &atoms {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Precondition(format!("atom position {x} outside [0, 1]")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!("atom weight {w} is not a finite non-negative number")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut positions = Vec::with_capacity(atoms.len());
        let mut weights = Vec::with_capacity(atoms.len());
        let mut i = 0;
        while i < atoms.len() {
            let start = atoms[i].0;
            let mut mass = 0.0;
            let mut moment = 0.0;
            let mut j = i;
            while j < atoms.len() && atoms[j].0 - start <= cfg.merge_tol {
                mass += atoms[j].1;
                moment += atoms[j].1 * atoms[j].0;
                j += 1;
            }
            if mass > 0.0 {
                let x = if j == i + 1 { start } else { (moment / mass).clamp(start, atoms[j - 1].0) };
                positions.push(x);
                weights.push(mass);
            }
            i = j;
        }
        let total: f64 = weights.iter().sum();
        let (positions, mut weights): (Vec<f64>, Vec<f64>) = positions
            .into_iter()
            .zip(weights)
            .filter(|&(_, w)| w / total >= cfg.prune_eps)
            .unzip();
        let mut sum = CompensatedSum::default();
        weights.iter().for_each(|&w| sum.add(w));
        let total = sum.value();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("measure has no mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(DiscreteMeasure { positions, weights })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.positions.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// One application of the Markov operator, `sum_j sum_i w_j g_i(x_j) delta_{T_i x_j}`.
pub fn markov_step(inst: &IfsInstance, nu: &DiscreteMeasure, cfg: &EvolveConfig) -> Result<DiscreteMeasure> {
    let k = inst.k();
    let required = (nu.len() as u128) * k as u128;
    if required > cfg.max_atoms as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: cfg.max_atoms,
        });
    }
    let mut atoms = Vec::with_capacity(nu.len() * k);
    for (x, w) in nu.atoms() {
        for i in 0..k {
            atoms.push((inst.map(i, x)?, w * inst.positive_weight(i, x)?));
        }
    }
    DiscreteMeasure::build(atoms, cfg)
}

/// The depth-`n` measure `sum_{|w| = n} g_w(x0) delta_{T_w x0}`.
///
/// Words are composed outward from `x0`: `T_w = T_{w_1} o ... o T_{w_n}` and
/// `g_w(x0) = g_{w_1}(T_{w_2} ... T_{w_n} x0) ... g_{w_n}(x0)`.
pub fn depth_n_measure(inst: &IfsInstance, x0: f64, n: usize, cfg: &EvolveConfig) -> Result<DiscreteMeasure> {
    check_start(x0, n)?;
    let required = checked_pow(inst.k(), n);
    if required > cfg.max_atoms as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: cfg.max_atoms,
        });
    }
    let mut atoms = Vec::with_capacity(required as usize);
    expand(inst, x0, 1.0, n, &mut atoms)?;
    DiscreteMeasure::build(atoms, cfg)
}

fn expand(inst: &IfsInstance, x: f64, w: f64, remaining: usize, out: &mut Vec<(f64, f64)>) -> Result<()> {
    if remaining == 0 {
        out.push((x, w));
        return Ok(());
    }
    for i in 0..inst.k() {
        let g = inst.positive_weight(i, x)?;
        expand(inst, inst.map(i, x)?, w * g, remaining - 1, out)?;
    }
    Ok(())
}

fn check_start(x0: f64, n: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::InvalidArgument(format!("x0 = {x0} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("depth must be >= 1".into()));
    }
    Ok(())
}

/// `int f d mu_m` for every depth `m = 0..=n` in one traversal, without
/// materialising atoms.
pub fn depth_integrals(inst: &IfsInstance, x0: f64, n: usize, f: &dyn Integrand, max_nodes: usize) -> Result<Vec<f64>> {
    check_start(x0, n)?;
    let required = checked_pow(inst.k(), n);
    if required > max_nodes as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: max_nodes,
        });
    }
    let mut sums = alloc::vec![CompensatedSum::default(); n + 1];
    walk(inst, x0, 1.0, 0, n, f, &mut sums)?;
    Ok(sums.iter().map(CompensatedSum::value).collect())
}

fn walk(
    inst: &IfsInstance,
    x: f64,
    w: f64,
    level: usize,
    n: usize,
    f: &dyn Integrand,
    sums: &mut [CompensatedSum],
) -> Result<()> {
    sums[level].add(w * f.value(x)?);
    if level == n {
        return Ok(());
    }
    for i in 0..inst.k() {
        let g = inst.positive_weight(i, x)?;
        walk(inst, inst.map(i, x)?, w * g, level + 1, n, f, sums)?;
    }
    Ok(())
}

/// Trajectory of the place-dependent chain `x <- T_I(x)`, `P(I = i | x) = g_i(x)`.
pub struct ChaosGame<'a> {
    inst: &'a IfsInstance,
    rng: rng::Rng,
    x: f64,
}

impl<'a> ChaosGame<'a> {
    pub fn new(inst: &'a IfsInstance, x0: f64, seed: u64) -> Result<Self> {
        check_start(x0, 1)?;
        Ok(ChaosGame {
            inst,
            rng: rng::from_seed(seed),
            x: x0,
        })
    }

    /// Advance one step and return the new point.
    pub fn step(&mut self) -> Result<f64> {
        let u = rng::uniform01(&mut self.rng);
        let k = self.inst.k();
        let mut cumulative = 0.0;
        let mut branch = k - 1;
        for i in 0..k {
            cumulative += self.inst.positive_weight(i, self.x)?;
            if u < cumulative {
                branch = i;
                break;
            }
        }
        self.x = self.inst.map(branch, self.x)?;
        Ok(self.x)
    }
}

/// Empirical measure of `samples` points after `burn_in` discarded steps.
pub fn chaos_game(inst: &IfsInstance, x0: f64, burn_in: usize, samples: usize, seed: u64) -> Result<DiscreteMeasure> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let mut game = ChaosGame::new(inst, x0, seed)?;
    for _ in 0..burn_in {
        game.step()?;
    }
    let w = 1.0 / samples as f64;
    let mut atoms = Vec::with_capacity(samples);
    for _ in 0..samples {
        atoms.push((game.step()?, w));
    }
    DiscreteMeasure::from_atoms(atoms)
}

/// Sample mean of `f` along a chaos-game trajectory, with its naive standard
/// error (autocorrelation ignored).
pub fn chaos_mean(
    inst: &IfsInstance,
    x0: f64,
    burn_in: usize,
    samples: usize,
    seed: u64,
    f: &dyn Integrand,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let mut game = ChaosGame::new(inst, x0, seed)?;
    for _ in 0..burn_in {
        game.step()?;
    }
    let (mut sum, mut sq) = (CompensatedSum::default(), CompensatedSum::default());
    for _ in 0..samples {
        let v = f.value(game.step()?)?;
        sum.add(v);
        sq.add(v * v);
    }
    let n = samples as f64;
    let mean = sum.value() / n;
    let var = (sq.value() / n - mean * mean).max(0.0);
    Ok((mean, libm::sqrt(var / n)))
}

/// `sum_j w_j f(x_j)`.
pub fn integrate(nu: &DiscreteMeasure, f: &dyn Integrand) -> Result<f64> {
    let mut acc = CompensatedSum::default();
    for (x, w) in nu.atoms() {
        acc.add(w * f.value(x)?);
    }
    Ok(acc.value())
}

/// Exact Wasserstein-1 distance on the line, `int |F_mu - F_nu|`.
pub fn w1_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let (a, b) = (mu.positions(), nu.positions());
    let (wa, wb) = (mu.weights(), nu.weights());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut acc = CompensatedSum::default();
    let mut last: Option<f64> = None;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if let Some(s) = last {
            acc.add(libm::fabs(fa - fb) * (t - s));
        }
        while i < a.len() && a[i] == t {
            fa += wa[i];
            i += 1;
        }
        while j < b.len() && b[j] == t {
            fb += wb[j];
            j += 1;
        }
        last = Some(t);
    }
    acc.value()
}

/// `max_f |int f dnu - sum_i int g_i (f o T_i) dnu|`.
pub fn stationarity_residual(inst: &IfsInstance, nu: &DiscreteMeasure, test_fns: &[&dyn Integrand]) -> Result<f64> {
    let mut worst = 0.0f64;
    for f in test_fns {
        let lhs = integrate(nu, *f)?;
        let mut rhs = CompensatedSum::default();
        for (x, w) in nu.atoms() {
            for i in 0..inst.k() {
                rhs.add(w * inst.weight(i, x)? * f.value(inst.map(i, x)?)?);
            }
        }
        worst = worst.max(libm::fabs(lhs - rhs.value()));
    }
    Ok(worst)
}
