//! Stationary measures, thermodynamic formalism and Hausdorff dimension for
//! weighted iterated function schemes on the unit interval.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure function
//! over immutable inputs; IO, configuration files and the command line live in
//! the `ifsthermo` companion crate.
//!
//! Layout:
//!
//! * [`expr`]: the expression language for maps, weights and integrands, with
//!   structural differentiation in `x`.
//! * [`family`]: parameterised families, binding at fixed `(lambda, theta)` and
//!   the hypothesis checks of [`family::validate`].
//! * [`measure`]: discrete approximations of the stationary measure (Markov
//!   operator, depth-n expansion, chaos game), integration and exact 1-D
//!   Wasserstein-1 distance.
//! * [`symbolic`]: words over the alphabet, projection to the attractor,
//!   potentials, pressure (periodic orbits and transfer matrix) and Gibbs
//!   cylinder weights.
//! * [`dimension`]: Bowen root, Moran oracle and the entropy / Lyapunov ratio.
//! * [`sweep`]: parameter sweeps, finite-difference smoothness diagnostics and
//!   the built-in presets.
#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dimension;
pub mod error;
pub mod expr;
pub mod family;
pub mod measure;
pub mod rng;
pub mod sweep;
pub mod symbolic;

mod numeric;

pub use error::{Error, EvalError, ParseError, ParseErrorKind, Result};
pub use expr::Expr;
pub use family::{bind, validate, FamilySpec, IfsInstance, Piecewise, ValidationReport};
pub use measure::{DiscreteMeasure, EvolveConfig};
pub use symbolic::{Potential, PressureEstimate, PressureMethod, SymbolWord};

/// Default reference point shared by the depth-n expansion and the Gibbs
/// cylinder weights.
pub const DEFAULT_X0: f64 = 0.5;

/// Default number of grid intervals used by [`family::validate`].
pub const DEFAULT_GRID: usize = 4096;
