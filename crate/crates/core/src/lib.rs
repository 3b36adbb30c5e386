//! Exact finite-lattice solver for reflected backward doubly stochastic
//! differential equations with jumps, under stochastic Lipschitz or
//! stochastic linear-growth drivers and barriers that may jump down on the
//! right.
//!
//! Every conditional expectation is an exact sum over a finite scenario
//! lattice, so the discrete equation, its side conditions and the
//! verification checks hold to rounding error.

pub mod barrier;
pub mod coefficients;
pub mod error;
pub mod lattice;
pub mod norms;
pub mod solver;
pub mod verify;

pub use barrier::{build_barrier, Barrier, BarrierShape, BarrierSpec};
pub use coefficients::{
    beta_floor, inf_convolution, Axis, DriverPair, DriverPoint, DriverSpec, Process, Regime, SearchDomain,
    StochasticLipschitzData,
};
pub use error::{Error, Result};
pub use lattice::{build_lattice, BPathSpec, LatticeConfig, Mark, ScenarioLattice, StoppingRule, Topology};
pub use norms::{weighted_norms, NormReport};
pub use solver::{
    mertens_split, minimal_solution_solve, picard_solve, solve_decoupled, validate_solution, DecoupledDrivers,
    PicardOptions, PicardTrace, Solution,
};
pub use verify::CheckReport;
