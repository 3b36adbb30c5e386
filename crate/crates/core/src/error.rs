use thiserror::Error;

use crate::solver::PicardTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid lattice configuration: {0}")]
    InvalidLattice(String),

    #[error("jump probability {value} at step {step} must be < 1 (at most one jump per step)")]
    JumpIntensity { step: usize, value: f64 },

    #[error("missing value for child {child} of node {node}")]
    MissingChildValue { node: usize, child: usize },

    #[error("stopping-rule enumeration refused: {atoms} atoms exceeds budget {budget}")]
    AtomBudget { atoms: usize, budget: usize },

    #[error("invalid coefficient data: {0}")]
    InvalidCoefficients(String),

    #[error("weight a² vanishes at step {step}")]
    ZeroWeight { step: usize },

    #[error("non-finite driver output at step {step}, node {node} (t = {t})")]
    NonFiniteDriver { step: usize, node: usize, t: f64 },

    #[error("inf-convolution search domain is empty")]
    EmptySearchDomain,

    #[error("epsilon + alpha = {0} must be < 1 for the Picard contraction")]
    ContractionBound(f64),

    #[error("invalid barrier: {0}")]
    InvalidBarrier(String),

    #[error("beta must be positive (got {0})")]
    InvalidBeta(f64),

    #[error("singular projection design at node {node}")]
    SingularDesign { node: usize },

    #[error("input is not a supermartingale at node {node} (excess {excess:e})")]
    NotSupermartingale { node: usize, excess: f64 },

    #[error("Picard iteration diverged after {} iterations", .trace.rows.len())]
    PicardDivergence { trace: Box<PicardTrace> },

    #[error("non-finite Picard iterate at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("minimal-solution ordering violated at n = {n}, node {node} (gap {gap:e})")]
    Monotonicity { n: usize, node: usize, gap: f64 },

    #[error("Picard solve failed for regularization index n = {n}: {source}")]
    RegularizedSolve {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("trace too short: {0} iterations")]
    TooFewIterations(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
