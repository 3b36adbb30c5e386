//! Executable checks of the comparison, a priori, contraction and
//! optimal-stopping properties against solver output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::barrier::Barrier;
use crate::coefficients::{DriverPair, DriverPoint, StochasticLipschitzData};
use crate::error::{Error, Result};
use crate::lattice::{enumerate_stopping_rules, ScenarioLattice};
use crate::norms::{s2_norm, time_integral};
use crate::solver::{solve_decoupled, DecoupledDrivers, PicardTrace, Solution};

pub const COMPARISON_TOL: f64 = 1e-10;
pub const SNELL_TOL: f64 = 1e-12;
pub const DEFAULT_DISCRETIZATION_SLACK: f64 = 0.05;
const RATIO_MARGIN: f64 = 0.05;
const SLOPE_MARGIN: f64 = 0.1;

/// Where a check saw its worst case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub b_path: usize,
    pub node: usize,
    pub time_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub max_violation: f64,
    pub tolerance: f64,
    pub witness: Option<Witness>,
    pub params: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, f64>,
}

impl CheckReport {
    /// `passed` is `max_violation <= tolerance`; NaN fails.
    pub fn new(name: &str, max_violation: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: max_violation <= tolerance,
            max_violation,
            tolerance,
            witness: None,
            params: BTreeMap::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    fn with_grid(self, lattice: &ScenarioLattice) -> Self {
        self.with_param("n_steps", lattice.n_steps() as f64).with_param("horizon", lattice.grid().horizon())
    }
}

/// Drivers of one side of a comparison.
#[derive(Clone, Copy, Debug)]
pub enum Drivers<'a> {
    Decoupled(&'a DecoupledDrivers),
    Pair(&'a DriverPair),
}

#[derive(Clone, Copy, Debug)]
pub struct Inputs<'a> {
    pub barrier: &'a Barrier,
    pub drivers: Drivers<'a>,
}

/// A `(y, z, u)` point at which both drivers are compared.
#[derive(Clone, Debug, PartialEq)]
pub struct DriverProbe {
    pub y: f64,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

fn check_ordered_inputs(
    lattice: &ScenarioLattice,
    sol2: &Solution,
    in1: &Inputs<'_>,
    in2: &Inputs<'_>,
    probes: &[DriverProbe],
) -> Result<()> {
    for node in 0..lattice.n_nodes() {
        let (a, b) = (in1.barrier.value(node), in2.barrier.value(node));
        let (ar, br) = (in1.barrier.right_limit(node), in2.barrier.right_limit(node));
        if a > b || ar > br {
            return Err(Error::Hypothesis(format!("barrier order fails at node {node}: ξ¹ = {a} > ξ² = {b}")));
        }
    }
    let (d, m, l) = (lattice.w_dim(), lattice.n_marks(), lattice.b_dim());
    match (in1.drivers, in2.drivers) {
        (Drivers::Decoupled(t1), Drivers::Decoupled(t2)) => {
            for b in 0..lattice.n_b_paths() {
                for i in 0..lattice.n_steps() {
                    for node in lattice.layer(i) {
                        if t1.f[b][node] > t2.f[b][node] {
                            return Err(Error::Hypothesis(format!(
                                "f order fails on B-path {b} at node {node}: {} > {}",
                                t1.f[b][node], t2.f[b][node]
                            )));
                        }
                        if t1.g[b][node * l..(node + 1) * l] != t2.g[b][node * l..(node + 1) * l] {
                            return Err(Error::Hypothesis(format!("g differs on B-path {b} at node {node}")));
                        }
                    }
                }
            }
        }
        (Drivers::Pair(p1), Drivers::Pair(p2)) => {
            let (mut g1, mut g2) = (vec![0.0; l], vec![0.0; l]);
            for (b, path) in sol2.paths.iter().enumerate() {
                for i in 0..lattice.n_steps() {
                    let t = lattice.grid().t(i);
                    for node in lattice.layer(i) {
                        let at = DriverPoint { step: i, node, t };
                        let own = DriverProbe {
                            y: path.y_plus[node],
                            z: path.z[node * d..(node + 1) * d].to_vec(),
                            u: path.u[node * m..(node + 1) * m].to_vec(),
                        };
                        for q in probes.iter().chain(std::iter::once(&own)) {
                            let (f1, f2) = (p1.f(&at, q.y, &q.z, &q.u), p2.f(&at, q.y, &q.z, &q.u));
                            if !(f1 <= f2) {
                                return Err(Error::Hypothesis(format!(
                                    "f order fails at step {i}, node {node}, B-path {b}, probe y = {}, z = {:?}, u = {:?}: {f1} > {f2}",
                                    q.y, q.z, q.u
                                )));
                            }
                            p1.g_into(&at, q.y, &q.z, &q.u, &mut g1);
                            p2.g_into(&at, q.y, &q.z, &q.u, &mut g2);
                            if g1 != g2 {
                                return Err(Error::Hypothesis(format!(
                                    "g differs at step {i}, node {node}, probe y = {}",
                                    q.y
                                )));
                            }
                        }
                    }
                }
            }
        }
        _ => return Err(Error::Hypothesis("both sides need the same kind of driver".into())),
    }
    Ok(())
}

/// `Y¹ ≤ Y²` node-wise, after verifying that the inputs are ordered.
pub fn check_comparison(
    lattice: &ScenarioLattice,
    sol1: &Solution,
    sol2: &Solution,
    in1: &Inputs<'_>,
    in2: &Inputs<'_>,
    probes: &[DriverProbe],
) -> Result<CheckReport> {
    check_ordered_inputs(lattice, sol2, in1, in2, probes)?;
    let mut worst = 0.0;
    let mut witness = None;
    for (b, (p, q)) in sol1.paths.iter().zip(&sol2.paths).enumerate() {
        for node in 0..lattice.n_nodes() {
            let v = p.y[node] - q.y[node];
            if v > worst {
                worst = v;
                witness = Some(Witness { b_path: b, node, time_index: lattice.time_index(node) });
            }
        }
    }
    let mut r = CheckReport::new("comparison", worst, COMPARISON_TOL).with_grid(lattice);
    r.witness = witness;
    Ok(r.with_metric("y0_first", sol1.mean_y0(lattice)).with_metric("y0_second", sol2.mean_y0(lattice)))
}

/// Both sides of the a priori inequality for two decoupled solves.
///
/// `LHS = ‖Ȳ‖²_{M²,a} + ‖Z̄‖² + ‖Ū‖²_λ` at `β` and
/// `RHS = ‖ξ̄‖²_{S²} at 2β + ‖f̄/a‖²/(β − 1) + ‖ḡ‖²`. The check passes when
/// `LHS ≤ RHS·(1 + slack)`; the reported violation is `max(LHS/RHS − 1, 0)`.
#[allow(clippy::too_many_arguments)]
pub fn check_apriori(
    lattice: &ScenarioLattice,
    sol1: &Solution,
    sol2: &Solution,
    in1: (&Barrier, &DecoupledDrivers),
    in2: (&Barrier, &DecoupledDrivers),
    data: &StochasticLipschitzData,
    beta: f64,
    slack: f64,
) -> Result<CheckReport> {
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(Error::InvalidBeta(beta));
    }
    let weights = data.node_weights(lattice)?;
    let (d, m, l) = (lattice.w_dim(), lattice.n_marks(), lattice.b_dim());
    let lambda = lattice.lambda();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let y_part = time_integral(lattice, &weights, beta, |b, node| {
        weights.a2[node] * (sol1.paths[b].y[node] - sol2.paths[b].y[node]).powi(2)
    });
    let z_part = time_integral(lattice, &weights, beta, |b, node| {
        sq(&diff(&sol1.paths[b].z[node * d..(node + 1) * d], &sol2.paths[b].z[node * d..(node + 1) * d]))
    });
    let u_part = time_integral(lattice, &weights, beta, |b, node| {
        let du = diff(&sol1.paths[b].u[node * m..(node + 1) * m], &sol2.paths[b].u[node * m..(node + 1) * m]);
        du.iter().zip(&lambda).map(|(v, w)| v * v * w).sum()
    });
    let xi_bar = diff(in1.0.values(), in2.0.values());
    let xi_paths: Vec<&[f64]> = vec![&xi_bar; lattice.n_b_paths()];
    let xi_part = s2_norm(lattice, &weights, 2.0 * beta, &xi_paths)?;
    let f_part = time_integral(lattice, &weights, beta, |b, node| {
        (in1.1.f[b][node] - in2.1.f[b][node]).powi(2) / weights.a2[node]
    });
    let g_part = time_integral(lattice, &weights, beta, |b, node| {
        sq(&diff(&in1.1.g[b][node * l..(node + 1) * l], &in2.1.g[b][node * l..(node + 1) * l]))
    });
    let lhs = y_part + z_part + u_part;
    let rhs = xi_part + f_part / (beta - 1.0) + g_part;
    let excess = apriori_excess(lhs, rhs);
    Ok(CheckReport::new("apriori_estimate", excess.max(0.0), slack)
        .with_grid(lattice)
        .with_param("beta", beta)
        .with_metric("lhs", lhs)
        .with_metric("rhs", rhs)
        .with_metric("excess", excess))
}

fn apriori_excess(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs - 1.0
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Ratios from the second iteration on stay below `ε + α + 0.05`, and the
/// log-differences decay at least as fast as `log(ε + α) + 0.1` per step.
pub fn check_contraction(trace: &PicardTrace, epsilon: f64, alpha: f64) -> Result<CheckReport> {
    let exact = trace.rows.iter().any(|r| r.bundle_diff == 0.0);
    if trace.rows.len() < 3 && !exact {
        return Err(Error::TooFewIterations(trace.rows.len()));
    }
    let bound = epsilon + alpha + RATIO_MARGIN;
    let max_ratio = trace.rows.iter().skip(1).filter_map(|r| r.ratio).fold(0.0, f64::max);
    let points: Vec<(f64, f64)> =
        trace.rows.iter().filter(|r| r.bundle_diff > 0.0).map(|r| (r.iter as f64, r.bundle_diff.ln())).collect();
    let slope = fitted_slope(&points);
    let slope_bound = (epsilon + alpha).ln() + SLOPE_MARGIN;
    let violation = (max_ratio - bound).max(slope.map_or(0.0, |s| s - slope_bound)).max(0.0);
    let mut r = CheckReport::new("picard_contraction", violation, 0.0)
        .with_param("beta", trace.beta)
        .with_param("epsilon", epsilon)
        .with_param("alpha", alpha)
        .with_metric("max_ratio", max_ratio)
        .with_metric("ratio_bound", bound)
        .with_metric("iterations", trace.rows.len() as f64);
    if let Some(s) = slope {
        r = r.with_metric("log_slope", s).with_metric("log_slope_bound", slope_bound);
    }
    Ok(r)
}

/// Least-squares slope; `None` with fewer than two points.
fn fitted_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Largest expected stopped reward over every stopping rule on `b_path`.
///
/// The reward for stopping at node `j` is `ξ_j + Σ_{i<j} (f_iΔt + g_i·ΔB_i)`.
pub fn snell_value(
    lattice: &ScenarioLattice,
    drivers: &DecoupledDrivers,
    barrier: &Barrier,
    b_path: usize,
    budget: usize,
) -> Result<(f64, usize)> {
    let rules = enumerate_stopping_rules(lattice, b_path, budget)?;
    let l = lattice.b_dim();
    let mut running = vec![0.0; lattice.n_nodes()];
    for i in 0..lattice.n_steps() {
        let dt = lattice.grid().dt(i);
        let db = lattice.b_increment(b_path, i);
        for node in lattice.layer(i) {
            let g = &drivers.g[b_path][node * l..(node + 1) * l];
            let step = drivers.f[b_path][node] * dt + g.iter().zip(db).map(|(g, b)| g * b).sum::<f64>();
            for (child, _) in lattice.children(node) {
                running[child] = running[node] + step;
            }
        }
    }
    let reward: Vec<f64> =
        (0..lattice.n_nodes()).map(|n| lattice.node_prob(n) * (barrier.value(n) + running[n])).collect();
    let best =
        rules.iter().map(|r| r.stop_nodes().iter().map(|&n| reward[n]).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
    Ok((best, rules.len()))
}

/// Brute-force optimal stopping against the solver's `Y_0` on one B-path.
pub fn snell_oracle(
    lattice: &ScenarioLattice,
    drivers: &DecoupledDrivers,
    barrier: &Barrier,
    b_path: usize,
    budget: usize,
) -> Result<CheckReport> {
    let (oracle, rules) = snell_value(lattice, drivers, barrier, b_path, budget)?;
    let solved = solve_decoupled(lattice, drivers, barrier, 1.0)?.y0(b_path);
    Ok(CheckReport::new("snell_oracle", (oracle - solved).abs(), SNELL_TOL)
        .with_grid(lattice)
        .with_param("b_path", b_path as f64)
        .with_metric("oracle", oracle)
        .with_metric("solver", solved)
        .with_metric("rules", rules as f64))
}
