//! Side conditions and the one-step identity, checked on a computed solution.

use serde::Serialize;

use super::{DecoupledDrivers, Solution};
use crate::barrier::Barrier;
use crate::coefficients::{DriverPair, DriverPoint};
use crate::lattice::{ScenarioLattice, Topology};
use crate::verify::{CheckReport, Witness};

pub const RESIDUAL_TOL: f64 = 1e-12;
pub const MARTINGALE_TOL: f64 = 1e-13;
/// Gap allowed between stored driver values and the drivers re-evaluated at
/// the returned iterate (the Picard fixed-point error).
pub const DRIVER_CONSISTENCY_TOL: f64 = 1e-8;

/// Which driver values the residual is checked against.
#[derive(Clone, Copy, Debug)]
pub enum DriverSource<'a> {
    /// The values recorded in the solution.
    Stored,
    Decoupled(&'a DecoupledDrivers),
    /// Stored values, plus their distance to the pair evaluated at the solution.
    Pair(&'a DriverPair),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckReport> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Worst {
    value: f64,
    at: Option<(usize, usize)>,
}

impl Worst {
    fn see(&mut self, value: f64, b: usize, node: usize) {
        if value > self.value || value.is_nan() && !self.value.is_nan() {
            self.value = value;
            self.at = Some((b, node));
        }
    }

    fn report(self, lattice: &ScenarioLattice, name: &str, tolerance: f64) -> CheckReport {
        let mut r = CheckReport::new(name, self.value, tolerance);
        if let Some((b_path, node)) = self.at {
            r.witness = Some(Witness { b_path, node, time_index: lattice.time_index(node) });
        }
        r
    }
}

/// Runs every solution check; never fails, each check carries its own verdict.
pub fn validate_solution(
    lattice: &ScenarioLattice,
    solution: &Solution,
    barrier: &Barrier,
    drivers: DriverSource<'_>,
) -> ValidationReport {
    let (d, m, l) = (lattice.w_dim(), lattice.n_marks(), lattice.b_dim());
    let n = lattice.n_steps();
    let tree = lattice.topology() == Topology::Tree;
    let right_continuous = barrier.is_right_continuous();
    let mut domination = Worst::default();
    let mut terminal = Worst::default();
    let mut monotone = Worst::default();
    let mut skorokhod = Worst::default();
    let mut min_kd = Worst::default();
    let mut min_c = Worst::default();
    let mut c_support = Worst::default();
    let mut kd_support = Worst::default();
    let mut residual = Worst::default();
    let mut mart = Worst::default();
    let mut c_zero = Worst::default();
    let mut consistency = Worst::default();
    let mut table_match = Worst::default();
    let mut out = vec![0.0; l];

    for (b, p) in solution.paths.iter().enumerate() {
        for node in 0..lattice.n_nodes() {
            let i = lattice.time_index(node);
            let (xi, xi_plus) = (barrier.value(node), barrier.right_limit(node));
            let dc = p.delta_c(node);
            domination.see((xi - p.y[node]).max(xi_plus - p.y_plus[node]).max(0.0), b, node);
            min_c.see(((p.y[node] - xi) * dc).abs(), b, node);
            monotone.see((-dc).max(0.0), b, node);
            if !barrier.is_right_jump_time(i) {
                c_support.see(dc.abs(), b, node);
            }
            if right_continuous {
                let c = if tree { p.c[node].abs() } else { dc.abs() };
                c_zero.see(c.max(if p.y[node] > xi { (p.y[node] - p.y_plus[node]).abs() } else { 0.0 }), b, node);
            }
            if lattice.is_leaf(node) {
                terminal.see((p.y[node] - xi).abs().max((p.y_plus[node] - xi).abs()), b, node);
                continue;
            }
            let dk = p.reflect[node];
            monotone.see((-dk).max(0.0), b, node);
            if barrier.is_predictable_time(i + 1) {
                min_kd.see(((p.y_plus[node] - xi_plus) * dk).abs().max(((p.y[node] - xi) * dk).abs()), b, node);
            } else {
                if p.y_plus[node] > xi_plus {
                    skorokhod.see(dk.abs(), b, node);
                }
                if tree {
                    for (child, _) in lattice.children(node) {
                        kd_support.see((p.k_d[child] - p.k_d[node]).abs(), b, node);
                    }
                }
            }
            if tree {
                for (child, _) in lattice.children(node) {
                    monotone.see((p.k[node] - p.k[child]).max(p.c[node] - p.c[child]).max(0.0), b, node);
                }
            }

            let (f, g): (f64, &[f64]) = match drivers {
                DriverSource::Decoupled(t) => {
                    table_match.see(
                        (t.f[b][node] - p.f_used[node]).abs().max(
                            t.g[b][node * l..(node + 1) * l]
                                .iter()
                                .zip(&p.g_used[node * l..])
                                .map(|(x, y)| (x - y).abs())
                                .fold(0.0, f64::max),
                        ),
                        b,
                        node,
                    );
                    (t.f[b][node], &t.g[b][node * l..(node + 1) * l])
                }
                DriverSource::Stored | DriverSource::Pair(_) => (p.f_used[node], &p.g_used[node * l..(node + 1) * l]),
            };
            if let DriverSource::Pair(pair) = drivers {
                let at = DriverPoint { step: i, node, t: lattice.grid().t(i) };
                let z = &p.z[node * d..(node + 1) * d];
                let u = &p.u[node * m..(node + 1) * m];
                let fv = pair.f(&at, p.y_plus[node], z, u);
                pair.g_into(&at, p.y_plus[node], z, u, &mut out);
                let gap = out.iter().zip(g).map(|(x, y)| (x - y).abs()).fold((fv - f).abs(), f64::max);
                consistency.see(if gap.is_nan() { f64::INFINITY } else { gap }, b, node);
            }

            let dt = lattice.grid().dt(i);
            let db = lattice.b_increment(b, i);
            let gb: f64 = g.iter().zip(db).map(|(g, db)| g * db).sum();
            let z = &p.z[node * d..(node + 1) * d];
            let u = &p.u[node * m..(node + 1) * m];
            let (mut mz, mut mu, mut mn) = (0.0, 0.0, 0.0);
            let mut orth = vec![0.0; d + m];
            for (child, br) in lattice.children(node) {
                let zdw: f64 = z.iter().zip(&br.dw).map(|(a, b)| a * b).sum();
                let udmu: f64 = u.iter().zip(&br.dmu).map(|(a, b)| a * b).sum();
                let rhs = p.y[child] + f * dt + gb - zdw - udmu - p.dn[child] + dk + dc;
                residual.see((p.y[node] - rhs).abs(), b, node);
                mz += br.prob * zdw;
                mu += br.prob * udmu;
                mn += br.prob * p.dn[child];
                for (o, x) in orth.iter_mut().zip(br.dw.iter().chain(&br.dmu)) {
                    *o += br.prob * p.dn[child] * x;
                }
            }
            let worst_orth = orth.iter().fold(0.0f64, |a, o| a.max(o.abs()));
            mart.see(mz.abs().max(mu.abs()).max(mn.abs()).max(worst_orth), b, node);
        }
    }

    let mut checks = vec![
        domination.report(lattice, "barrier_domination", RESIDUAL_TOL),
        terminal.report(lattice, "terminal_condition", RESIDUAL_TOL),
        monotone.report(lattice, "k_c_nondecreasing", 0.0),
        skorokhod.report(lattice, "skorokhod_kc", 0.0),
        min_kd.report(lattice, "minimality_kd", 0.0),
        min_c.report(lattice, "minimality_c", 0.0),
        c_support.report(lattice, "c_support", 0.0),
        kd_support.report(lattice, "kd_support", 0.0),
        residual.report(lattice, "one_step_residual", RESIDUAL_TOL),
        mart.report(lattice, "martingale_increments", MARTINGALE_TOL),
        c_zero.report(lattice, "c_zero_right_continuous", 0.0),
    ];
    match drivers {
        DriverSource::Decoupled(_) => checks.push(table_match.report(lattice, "driver_tables", 0.0)),
        DriverSource::Pair(_) => checks.push(consistency.report(lattice, "driver_consistency", DRIVER_CONSISTENCY_TOL)),
        DriverSource::Stored => {}
    }
    for c in &mut checks {
        c.params.insert("n_steps".into(), n as f64);
        c.params.insert("horizon".into(), lattice.grid().horizon());
    }
    ValidationReport { passed: checks.iter().all(|c| c.passed), checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{build_barrier, BarrierShape};
    use crate::lattice::{build_lattice, LatticeConfig, Mark};
    use crate::solver::solve_decoupled;

    fn setup() -> (ScenarioLattice, Barrier, DecoupledDrivers) {
        let cfg = LatticeConfig::new(3, 1.0).with_marks(vec![Mark { value: 1.0, intensity: 0.5 }]);
        let l = build_lattice(&cfg).unwrap();
        let values: Vec<f64> = (0..l.n_nodes()).map(|n| ((n * 7 % 5) as f64) * 0.4).collect();
        let b =
            build_barrier(&BarrierShape::Custom { values, right_values: None, right_jump_times: vec![] }.into(), &l)
                .unwrap();
        let drv = DecoupledDrivers::from_fn(&l, |_, node| 0.1 * (node % 3) as f64 - 0.1, |_, _, g| g.fill(0.0));
        (l, b, drv)
    }

    #[test]
    fn solver_output_passes() {
        let (l, b, drv) = setup();
        let s = solve_decoupled(&l, &drv, &b, 1.0).unwrap();
        let r = validate_solution(&l, &s, &b, DriverSource::Decoupled(&drv));
        assert!(r.passed, "{:?}", r.failures().collect::<Vec<_>>());
        assert_eq!(r.check("c_zero_right_continuous").unwrap().max_violation, 0.0);
    }

    #[test]
    fn corrupted_k_breaks_skorokhod() {
        let (l, b, drv) = setup();
        let mut s = solve_decoupled(&l, &drv, &b, 1.0).unwrap();
        let p = &mut s.paths[0];
        let node =
            (0..l.n_nodes() - l.leaves().len()).find(|&n| p.y_plus[n] > b.right_limit(n)).expect("a continuation node");
        p.reflect[node] += 0.1;
        let r = validate_solution(&l, &s, &b, DriverSource::Stored);
        let sk = r.check("skorokhod_kc").unwrap();
        assert!(!sk.passed);
        assert_eq!(sk.witness.as_ref().unwrap().node, node);
    }
}
