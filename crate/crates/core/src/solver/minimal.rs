//! Minimal solution for growth-regime drivers as the increasing limit of
//! solutions driven by the inf-convolutions `f_n`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{picard_solve, PicardOptions, PicardTrace, Solution};
use crate::barrier::Barrier;
use crate::coefficients::{
    growth_excess, DriverPair, DriverPoint, Probe, Regime, SearchDomain, StochasticLipschitzData,
};
use crate::error::{Error, Result};
use crate::lattice::ScenarioLattice;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalOptions {
    pub picard: PicardOptions,
    pub n_max: usize,
    pub domain: SearchDomain,
    /// Allowed breach of `Y¹ ≤ Yⁿ ≤ Y^{n+1} ≤ Ȳ`.
    pub monotone_tol: f64,
}

#[derive(Clone, Debug)]
pub struct MinimalOutcome {
    /// Solution for `f_{n_max}`.
    pub solution: Solution,
    /// `snapshots[n − 1][b]` is `Yⁿ` on B-path `b`.
    pub snapshots: Vec<Vec<Vec<f64>>>,
    /// Solution for the growth envelope `F`.
    pub envelope: Solution,
    pub traces: Vec<PicardTrace>,
    /// `max (Y^{n_max} − Y^{n_max−1})`; zero for `n_max = 1`.
    pub sup_gap: f64,
}

/// Growth bound checked at every node on the `y` axis of the search domain.
fn check_growth(
    lattice: &ScenarioLattice,
    pair: &DriverPair,
    data: &StochasticLipschitzData,
    lambda: &[f64],
    domain: &SearchDomain,
) -> Result<()> {
    let probes: Vec<Probe> = domain
        .y
        .points()
        .into_iter()
        .map(|y| Probe { y, z: vec![0.0; lattice.w_dim()], u: vec![0.0; lattice.n_marks()] })
        .collect();
    for i in 0..lattice.n_steps() {
        let t = lattice.grid().t(i);
        for node in lattice.layer(i) {
            let excess = growth_excess(pair, data, lambda, &DriverPoint { step: i, node, t }, &probes);
            if excess > 1e-12 {
                return Err(Error::Hypothesis(format!(
                    "|f| exceeds the growth envelope by {excess:e} at step {i}, node {node}"
                )));
            }
        }
    }
    Ok(())
}

pub fn minimal_solution_solve(
    lattice: &ScenarioLattice,
    pair: &DriverPair,
    barrier: &Barrier,
    data: &StochasticLipschitzData,
    options: &MinimalOptions,
) -> Result<MinimalOutcome> {
    if pair.regime() != Regime::Growth {
        return Err(Error::Hypothesis("minimal-solution scheme needs a growth-regime driver".into()));
    }
    if options.n_max == 0 {
        return Err(Error::InvalidCoefficients("n_max must be at least 1".into()));
    }
    data.validate(lattice, Regime::Growth)?;
    let lambda = lattice.lambda();
    check_growth(lattice, pair, data, &lambda, &options.domain)?;
    let shared = Arc::new(data.clone());
    let domain = Arc::new(options.domain.clone());

    let mut snapshots: Vec<Vec<Vec<f64>>> = Vec::with_capacity(options.n_max);
    let mut traces = Vec::with_capacity(options.n_max + 1);
    let mut last = None;
    for n in 1..=options.n_max {
        let f_n = pair.regularized(n, shared.clone(), lambda.clone(), domain.clone());
        let (sol, trace) = picard_solve(lattice, &f_n, barrier, data, &options.picard)
            .map_err(|e| Error::RegularizedSolve { n, source: Box::new(e) })?;
        let ys: Vec<Vec<f64>> = sol.paths.iter().map(|p| p.y.clone()).collect();
        if let Some(prev) = snapshots.last() {
            check_order(prev, &ys, n, options.monotone_tol)?;
        }
        snapshots.push(ys);
        traces.push(trace);
        last = Some(sol);
    }
    let solution = last.expect("n_max >= 1");
    let env = pair.envelope(shared, lambda);
    let (envelope, trace) = picard_solve(lattice, &env, barrier, data, &options.picard)
        .map_err(|e| Error::RegularizedSolve { n: options.n_max + 1, source: Box::new(e) })?;
    traces.push(trace);
    let env_y: Vec<Vec<f64>> = envelope.paths.iter().map(|p| p.y.clone()).collect();
    check_order(snapshots.last().expect("non-empty"), &env_y, options.n_max + 1, options.monotone_tol)?;
    let sup_gap = match snapshots.len() {
        0 | 1 => 0.0,
        k => sup_difference(&snapshots[k - 1], &snapshots[k - 2]),
    };
    Ok(MinimalOutcome { solution, snapshots, envelope, traces, sup_gap })
}

/// Errors unless `lower ≤ upper + tol` everywhere; `n` labels the upper one.
fn check_order(lower: &[Vec<f64>], upper: &[Vec<f64>], n: usize, tol: f64) -> Result<()> {
    for (lo, up) in lower.iter().zip(upper) {
        for (node, (a, b)) in lo.iter().zip(up).enumerate() {
            if a - b > tol {
                return Err(Error::Monotonicity { n, node, gap: a - b });
            }
        }
    }
    Ok(())
}

fn sup_difference(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q)).fold(f64::NEG_INFINITY, f64::max)
}
