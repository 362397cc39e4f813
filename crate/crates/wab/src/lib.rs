//! # wab
//!
//! A transport metric for *nonnegative* measures on a finite reversible
//! Markov chain, and the entropy gradient flow it induces.
//!
//! Classical graph transport metrics compare probability densities: total
//! mass is conserved along every admissible path. This crate drops that
//! restriction. Mass may be created or removed, but only along a fixed
//! direction `p` at a scalar rate `h`, and the rate is billed into the
//! action. Two positive weights steer the trade-off: `a` prices the source,
//! `b` prices transport. The squared distance between two densities is the
//! minimal action
//!
//! ```text
//! W(mu0, mu1)^2 = inf  integral  a^2 h_t^2 + b^2 ||grad psi_t||_{mu_t}^2  dt
//! ```
//!
//! over curves that solve the continuity equation with source
//! `mu_dot + div(mobility * grad psi) = h p`. The same geometry turns the
//! entropy `H(mu) = sum (mu log mu - mu) pi` into a Lyapunov functional: its
//! gradient flow is a heat equation with a scalar source term, and it
//! converges exponentially to the constant density `1`.
//!
//! ## Modules
//!
//! | Module | Provides |
//! |--------|----------|
//! | [`chain`] | Reversible Markov chains: validation, stationary density, spectrum |
//! | [`calculus`] | Discrete gradient/divergence/Laplacian, weighted inner products, logarithmic mean |
//! | [`operators`] | Mobility-weighted Laplacians, elliptic solves, tangent decomposition, metric tensor |
//! | [`distance`] | Action functionals, admissible paths, distance estimation with certified lower bounds |
//! | [`flow`] | Entropy, heat equation with source, trajectory integration, decay diagnostics |
//! | [`io`] | JSON/CSV file formats used by the CLI |
//! | [`selfcheck`] | Built-in pass/fail diagnostic suite (the `demo` subcommand) |
//!
//! ## Quick start
//!
//! ```rust
//! use nalgebra::{dmatrix, dvector};
//! use wab::chain::build_chain;
//! use wab::operators::TransportParams;
//! use wab::distance::{estimate_distance, DistanceOpts};
//!
//! let chain = build_chain(dmatrix![0.9, 0.1; 0.2, 0.8]).unwrap();
//! let params = TransportParams::normalized(1.0, 1.0, dvector![1.0, 1.0], &chain).unwrap();
//!
//! let mu0 = dvector![1.0, 1.0];
//! let mu1 = dvector![1.0, 1.0] + 0.2 * params.p();
//! let opts = DistanceOpts { n_steps: 8, restarts: 2, ..DistanceOpts::default() };
//! let est = estimate_distance(&mu0, &mu1, &params, &chain, &opts).unwrap();
//! // pure-source displacement: both bounds pinch the exact value a*|s| = 0.2
//! assert!((est.upper_bound - 0.2).abs() < 2e-3);
//! assert!((est.lower_bound - 0.2).abs() < 1e-12);
//! ```
//!
//! ## Conventions
//!
//! - Densities are `DVector<f64>` with nonnegative entries; edge fields are
//!   dense `DMatrix<f64>` on ordered node pairs. Membership in the cone (or
//!   its interior) is checked by classifier functions, not encoded in types.
//! - The kernel `K` is row-stochastic and must satisfy detailed balance with
//!   its stationary density; non-reversible input is a hard error.
//! - Edge fields are compared only on the support `K(x,y) > 0`; entries off
//!   the support are free and carry no energy.
//!
//! ## What can go wrong
//!
//! 1. **Non-reversible kernels** are rejected at construction. The discrete
//!    integration-by-parts identity fails without detailed balance, and all
//!    downstream solvers rely on it.
//! 2. **Boundary densities** (zero entries) break the elliptic solves: the
//!    mobility vanishes and the restricted operator degenerates. Lift with
//!    [`distance::epsilon_lift`] first.
//! 3. **Distance values are estimates.** `upper_bound` is the best action of
//!    an explicit discrete path, `lower_bound` a mass-change certificate;
//!    the true metric lies between them.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub mod calculus;
pub mod chain;
pub mod distance;
pub mod flow;
pub mod io;
pub mod operators;
mod optim;
pub mod selfcheck;

/// Nonnegative node density (one entry per state).
pub type Density = DVector<f64>;

/// Real-valued function on ordered node pairs.
pub type EdgeField = DMatrix<f64>;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),

    #[error("row {row} of the kernel sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },

    #[error("kernel is not irreducible: state {0} is not strongly connected to state 0")]
    NotIrreducible(usize),

    #[error("kernel violates detailed balance: defect {defect:.3e}")]
    NotReversible { defect: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative input: {0}")]
    NegativeInput(f64),

    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("density is not strictly positive (min entry {0:.3e})")]
    NotStrictlyPositive(f64),

    #[error("right-hand side is not solvable: weighted mean {0:.3e} is nonzero")]
    NotInRange(f64),

    #[error("restricted system is ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("source direction must have unit weighted mass, got {0}")]
    SourceNotNormalized(f64),

    #[error("weights must be positive, got a = {a}, b = {b}")]
    NonPositiveWeights { a: f64, b: f64 },

    #[error("state is at equilibrium: entropy gap {0:.3e} below resolution")]
    AtEquilibrium(f64),

    #[error("not enough usable samples: {got} < {need}")]
    InsufficientData { got: usize, need: usize },

    #[error("step size underflow at t = {t}: positivity monitor still violated after {halvings} halvings")]
    StepSizeUnderflow { t: f64, halvings: u32 },

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Stable short name of the violated invariant, used in CLI reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotSquare(..) => "NotSquare",
            Error::RowSum { .. } => "RowSumError",
            Error::NotIrreducible(_) => "NotIrreducible",
            Error::NotReversible { .. } => "NotReversible",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NegativeInput(_) => "NegativeInput",
            Error::NegativeEntry { .. } => "NegativeEntry",
            Error::NotStrictlyPositive(_) => "NotStrictlyPositive",
            Error::NotInRange(_) => "NotInRange",
            Error::IllConditioned(_) => "IllConditioned",
            Error::SourceNotNormalized(_) => "SourceNotNormalized",
            Error::NonPositiveWeights { .. } => "NonPositiveWeights",
            Error::AtEquilibrium(_) => "AtEquilibrium",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::InvalidOption(_) => "InvalidOption",
            Error::Numerical(_) => "NumericalFailure",
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
