//! Backward induction for drivers that do not depend on the solution.

use rayon::prelude::*;

use super::martingale::StepProjection;
use super::{PathSolution, Solution};
use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::lattice::{ScenarioLattice, Topology};

/// Driver values per B-path: `f[b][node]` and `g[b][node·ℓ + k]`.
/// Values at terminal nodes are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoupledDrivers {
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

impl DecoupledDrivers {
    pub fn zero(lattice: &ScenarioLattice) -> Self {
        let n = lattice.n_nodes();
        Self {
            f: vec![vec![0.0; n]; lattice.n_b_paths()],
            g: vec![vec![0.0; n * lattice.b_dim()]; lattice.n_b_paths()],
        }
    }

    /// Tabulates `f(b, node)` and `g(b, node, out)` on every node.
    pub fn from_fn<F, G>(lattice: &ScenarioLattice, f: F, mut g: G) -> Self
    where
        F: Fn(usize, usize) -> f64,
        G: FnMut(usize, usize, &mut [f64]),
    {
        let (n, l) = (lattice.n_nodes(), lattice.b_dim());
        let mut out = Self::zero(lattice);
        for b in 0..lattice.n_b_paths() {
            for node in 0..n {
                out.f[b][node] = f(b, node);
                g(b, node, &mut out.g[b][node * l..(node + 1) * l]);
            }
        }
        out
    }

    fn check(&self, lattice: &ScenarioLattice) -> Result<()> {
        let (n, l) = (lattice.n_nodes(), lattice.b_dim());
        let shape_ok = self.f.len() == lattice.n_b_paths()
            && self.g.len() == lattice.n_b_paths()
            && self.f.iter().all(|v| v.len() == n)
            && self.g.iter().all(|v| v.len() == n * l);
        if !shape_ok {
            return Err(Error::Dimension("driver tables do not match the lattice".into()));
        }
        for (f, g) in self.f.iter().zip(&self.g) {
            for node in 0..n {
                if lattice.is_leaf(node) {
                    continue;
                }
                if !f[node].is_finite() || g[node * l..(node + 1) * l].iter().any(|v| !v.is_finite()) {
                    let step = lattice.time_index(node);
                    return Err(Error::NonFiniteDriver { step, node, t: lattice.grid().t(step) });
                }
            }
        }
        Ok(())
    }
}

/// Solves the reflected equation with given driver values, B-paths in parallel.
pub fn solve_decoupled(
    lattice: &ScenarioLattice,
    drivers: &DecoupledDrivers,
    barrier: &Barrier,
    beta: f64,
) -> Result<Solution> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidBeta(beta));
    }
    if barrier.values().len() != lattice.n_nodes() {
        return Err(Error::InvalidBarrier("barrier does not match the lattice".into()));
    }
    drivers.check(lattice)?;
    let projections = (0..lattice.n_steps())
        .map(|i| StepProjection::new(lattice, i).ok_or(Error::SingularDesign { node: lattice.layer(i).start }))
        .collect::<Result<Vec<_>>>()?;
    let paths = (0..lattice.n_b_paths())
        .into_par_iter()
        .map(|b| solve_path(lattice, &projections, &drivers.f[b], &drivers.g[b], barrier, b))
        .collect();
    Ok(Solution { paths, w_dim: lattice.w_dim(), n_marks: lattice.n_marks(), b_dim: lattice.b_dim() })
}

fn solve_path(
    lattice: &ScenarioLattice,
    projections: &[StepProjection],
    f: &[f64],
    g: &[f64],
    barrier: &Barrier,
    b: usize,
) -> PathSolution {
    let n_nodes = lattice.n_nodes();
    let (d, m, l) = (lattice.w_dim(), lattice.n_marks(), lattice.b_dim());
    let mut s = PathSolution {
        y: vec![0.0; n_nodes],
        y_plus: vec![0.0; n_nodes],
        z: vec![0.0; n_nodes * d],
        u: vec![0.0; n_nodes * m],
        k: vec![0.0; n_nodes],
        k_d: vec![0.0; n_nodes],
        c: vec![0.0; n_nodes],
        dn: vec![0.0; n_nodes],
        reflect: vec![0.0; n_nodes],
        f_used: vec![0.0; n_nodes],
        g_used: vec![0.0; n_nodes * l],
    };
    for leaf in lattice.leaves() {
        s.y[leaf] = barrier.value(leaf);
        s.y_plus[leaf] = barrier.value(leaf);
    }
    let mut child_values = Vec::new();
    for i in (0..lattice.n_steps()).rev() {
        let dt = lattice.grid().dt(i);
        let db = lattice.b_increment(b, i);
        for node in lattice.layer(i) {
            child_values.clear();
            child_values.extend(lattice.children(node).map(|(child, _)| s.y[child]));
            let comp = projections[i].project(&child_values);
            let gb: f64 = g[node * l..(node + 1) * l].iter().zip(db).map(|(g, db)| g * db).sum();
            let continuation = comp.mean + f[node] * dt + gb;
            let y_plus = continuation.max(barrier.right_limit(node));
            s.reflect[node] = y_plus - continuation;
            s.y_plus[node] = y_plus;
            s.y[node] = y_plus.max(barrier.value(node));
            s.z[node * d..(node + 1) * d].copy_from_slice(&comp.z);
            s.u[node * m..(node + 1) * m].copy_from_slice(&comp.u);
            s.f_used[node] = f[node];
            s.g_used[node * l..(node + 1) * l].copy_from_slice(&g[node * l..(node + 1) * l]);
            for ((child, _), r) in lattice.children(node).zip(&comp.residual) {
                s.dn[child] = *r;
            }
        }
    }
    accumulate(lattice, barrier, &mut s);
    s
}

/// Cumulative `K`, `K^d`, `C` along the tree; NaN where paths recombine.
fn accumulate(lattice: &ScenarioLattice, barrier: &Barrier, s: &mut PathSolution) {
    if lattice.topology() == Topology::Recombining {
        s.k.fill(f64::NAN);
        s.k_d.fill(f64::NAN);
        s.c.fill(f64::NAN);
        return;
    }
    s.k[0] = 0.0;
    s.k_d[0] = 0.0;
    s.c[0] = s.delta_c(0);
    for i in 0..lattice.n_steps() {
        let predictable = barrier.is_predictable_time(i + 1);
        for node in lattice.layer(i) {
            let dk = s.reflect[node];
            let (k, k_d, c) = (s.k[node], s.k_d[node], s.c[node]);
            for (child, _) in lattice.children(node) {
                s.k[child] = k + dk;
                s.k_d[child] = if predictable { k_d + dk } else { k_d };
                s.c[child] = c + (s.y[child] - s.y_plus[child]);
            }
        }
    }
}
