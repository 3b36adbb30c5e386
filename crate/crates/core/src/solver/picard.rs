//! Picard iteration `Θ^{n+1} = Φ(Θ^n)` for drivers depending on `(Y, Z, U)`.
//!
//! Each sweep freezes the drivers at the previous iterate (at the left
//! endpoint of every step, with `y = Y_{i+}`) and solves the decoupled
//! problem. Distances are measured in the squared bundle norm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_decoupled, DecoupledDrivers, Solution};
use crate::barrier::Barrier;
use crate::coefficients::{beta_floor, eval_drivers, DriverPair, DriverPoint, Regime, StochasticLipschitzData};
use crate::error::{Error, Result};
use crate::lattice::ScenarioLattice;

/// Consecutive growing differences that count as divergence.
const DIVERGENCE_RUN: usize = 3;
/// Differences below this multiple of the iterate size are rounding noise.
const NOISE_FLOOR: f64 = 1e-24;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialIterate {
    /// `Y⁰ = Z⁰ = U⁰ = 0`.
    #[default]
    Zero,
    /// `Y⁰ = ξ`, `Z⁰ = U⁰ = 0`.
    BarrierLift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub beta: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub initial: InitialIterate,
}

impl PicardOptions {
    pub fn new(beta: f64, epsilon: f64) -> Self {
        Self { beta, epsilon, tolerance: 1e-20, max_iter: 200, initial: InitialIterate::Zero }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    /// `‖Θ^iter − Θ^{iter−1}‖²` in the bundle norm.
    pub bundle_diff: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    pub rows: Vec<TraceRow>,
    pub beta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta_floor: f64,
    pub converged: bool,
    pub tolerance: f64,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn last_diff(&self) -> Option<f64> {
        self.rows.last().map(|r| r.bundle_diff)
    }
}

fn initial_solution(lattice: &ScenarioLattice, barrier: &Barrier, initial: InitialIterate) -> Result<Solution> {
    let zero = DecoupledDrivers::zero(lattice);
    // the zero-driver solve only supplies correctly shaped storage
    let mut s = solve_decoupled(lattice, &zero, barrier, 1.0)?;
    for p in &mut s.paths {
        p.z.fill(0.0);
        p.u.fill(0.0);
        match initial {
            InitialIterate::Zero => {
                p.y.fill(0.0);
                p.y_plus.fill(0.0);
            }
            InitialIterate::BarrierLift => {
                p.y.copy_from_slice(barrier.values());
                p.y_plus.copy_from_slice(barrier.right_values());
            }
        }
    }
    Ok(s)
}

/// Driver values at every non-terminal node, frozen at `prev`.
fn freeze_drivers(lattice: &ScenarioLattice, pair: &DriverPair, prev: &Solution) -> Result<DecoupledDrivers> {
    let (d, m, l) = (lattice.w_dim(), lattice.n_marks(), lattice.b_dim());
    if pair.g_dim() != l {
        return Err(Error::Dimension(format!("g has {} components, B has {l}", pair.g_dim())));
    }
    let per_path = prev
        .paths
        .par_iter()
        .map(|p| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut f = vec![0.0; lattice.n_nodes()];
            let mut g = vec![0.0; lattice.n_nodes() * l];
            for i in 0..lattice.n_steps() {
                let t = lattice.grid().t(i);
                for node in lattice.layer(i) {
                    let at = DriverPoint { step: i, node, t };
                    let z = &p.z[node * d..(node + 1) * d];
                    let u = &p.u[node * m..(node + 1) * m];
                    let (fv, gv) = eval_drivers(pair, &at, p.y_plus[node], z, u)?;
                    f[node] = fv;
                    g[node * l..(node + 1) * l].copy_from_slice(&gv);
                }
            }
            Ok((f, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let (f, g) = per_path.into_iter().unzip();
    Ok(DecoupledDrivers { f, g })
}

/// Fixed point of the Picard map, with the per-iteration contraction trace.
pub fn picard_solve(
    lattice: &ScenarioLattice,
    pair: &DriverPair,
    barrier: &Barrier,
    data: &StochasticLipschitzData,
    options: &PicardOptions,
) -> Result<(Solution, PicardTrace)> {
    if pair.regime() != Regime::Lipschitz {
        return Err(Error::Hypothesis("Picard iteration needs a Lipschitz-regime driver".into()));
    }
    data.validate(lattice, Regime::Lipschitz)?;
    let (_, beta0) = beta_floor(options.epsilon, data.alpha)?;
    if !(options.beta > 0.0 && options.beta.is_finite()) {
        return Err(Error::InvalidBeta(options.beta));
    }
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidCoefficients(format!("tolerance {} must be positive", options.tolerance)));
    }
    if options.beta < beta0 {
        log::warn!("beta = {} is below the contraction floor {beta0}", options.beta);
    }
    let weights = data.node_weights(lattice)?;
    let mut trace = PicardTrace {
        rows: Vec::new(),
        beta: options.beta,
        epsilon: options.epsilon,
        alpha: data.alpha,
        beta_floor: beta0,
        converged: false,
        tolerance: options.tolerance,
    };
    let mut current = initial_solution(lattice, barrier, options.initial)?;
    let mut growing = 0;
    for iter in 1..=options.max_iter {
        let drivers = freeze_drivers(lattice, pair, &current)?;
        let next = solve_decoupled(lattice, &drivers, barrier, options.beta)?;
        if !next.is_finite() {
            return Err(Error::NonFiniteIterate { iteration: iter });
        }
        let diff = next.bundle_distance(&current, lattice, &weights, options.beta)?;
        let ratio = trace.last_diff().filter(|d| *d > 0.0).map(|d| diff / d);
        trace.rows.push(TraceRow { iter, bundle_diff: diff, ratio });
        current = next;
        if diff <= options.tolerance {
            trace.converged = true;
            break;
        }
        // the iterate size is only needed once the difference grows
        let grew = ratio.is_some_and(|r| r > 1.0);
        if grew && diff > NOISE_FLOOR * (1.0 + current.norms(lattice, &weights, options.beta)?.bundle) {
            growing += 1;
        } else {
            growing = 0;
        }
        if growing >= DIVERGENCE_RUN && options.beta >= beta0 {
            return Err(Error::PicardDivergence { trace: Box::new(trace) });
        }
    }
    if !trace.converged {
        log::warn!(
            "Picard stopped after {} iterations with difference {:e}",
            options.max_iter,
            trace.last_diff().unwrap_or(f64::NAN)
        );
    }
    Ok((current, trace))
}
