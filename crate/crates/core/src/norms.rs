//! β-weighted norms of lattice processes.
//!
//! Expectations are exact sums over atoms and B-paths. Time integrals use
//! left-endpoint sums over steps `0..N`. The ess-sup norm is the expected
//! pathwise maximum of `e^{βA_i}|Ψ_i|²` over node times and right limits, which dominates the value of every
//! stopping rule and is attained by the rule that stops at the running max.

use serde::{Deserialize, Serialize};

use crate::coefficients::NodeWeights;
use crate::error::{Error, Result};
use crate::lattice::{ScenarioLattice, Topology};

/// Borrowed `(Y, Z, U)` on one B-path. `y_plus` holds the right limits
/// `Y_{i+}`, which the pathwise sup also ranges over. `z` is node-major with
/// `d` entries per node, `u` node-major with one entry per mark.
#[derive(Clone, Copy, Debug)]
pub struct ThetaRef<'a> {
    pub y: &'a [f64],
    pub y_plus: &'a [f64],
    pub z: &'a [f64],
    pub u: &'a [f64],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub beta: f64,
    pub s2beta: f64,
    pub m2a_beta: f64,
    pub m2beta_z: f64,
    pub l2beta_u: f64,
    pub bundle: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier_s2_2beta: Option<f64>,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBeta(beta))
    }
}

/// All β-norms of `(Y, Z, U)`, one [`ThetaRef`] per B-path.
pub fn weighted_norms(
    lattice: &ScenarioLattice,
    weights: &NodeWeights,
    beta: f64,
    thetas: &[ThetaRef<'_>],
) -> Result<NormReport> {
    check_beta(beta)?;
    let (n_nodes, d, m) = (lattice.n_nodes(), lattice.w_dim(), lattice.n_marks());
    if thetas.len() != lattice.n_b_paths() {
        return Err(Error::Dimension(format!("{} processes for {} B-paths", thetas.len(), lattice.n_b_paths())));
    }
    if thetas.iter().any(|t| {
        t.y.len() != n_nodes || t.y_plus.len() != n_nodes || t.z.len() != n_nodes * d || t.u.len() != n_nodes * m
    }) {
        return Err(Error::Dimension("process length does not match the lattice".into()));
    }
    let lambda = lattice.lambda();
    let mut s2beta = 0.0;
    for (path, t) in lattice.b_paths().iter().zip(thetas) {
        let score: Vec<f64> =
            t.y.iter()
                .zip(t.y_plus)
                .zip(&weights.big_a)
                .map(|((y, yp), a)| (beta * a).exp() * (y * y).max(yp * yp))
                .collect();
        s2beta += path.prob * expected_max(lattice, &score);
    }
    let m2a_beta = time_integral(lattice, weights, beta, |b, node| weights.a2[node] * thetas[b].y[node].powi(2));
    let m2beta_z = time_integral(lattice, weights, beta, |b, node| {
        thetas[b].z[node * d..(node + 1) * d].iter().map(|v| v * v).sum()
    });
    let l2beta_u = time_integral(lattice, weights, beta, |b, node| {
        thetas[b].u[node * m..(node + 1) * m].iter().zip(&lambda).map(|(v, l)| v * v * l).sum()
    });
    Ok(NormReport {
        beta,
        s2beta,
        m2a_beta,
        m2beta_z,
        l2beta_u,
        bundle: s2beta + m2a_beta + m2beta_z + l2beta_u,
        barrier_s2_2beta: None,
    })
}

/// `𝐄 Σ_{i<N} e^{βA_i} h(node_i) Δt_i`, averaged over B-paths.
pub fn time_integral<H>(lattice: &ScenarioLattice, weights: &NodeWeights, beta: f64, h: H) -> f64
where
    H: Fn(usize, usize) -> f64,
{
    let mut total = 0.0;
    for (b, path) in lattice.b_paths().iter().enumerate() {
        let mut acc = 0.0;
        for i in 0..lattice.n_steps() {
            let dt = lattice.grid().dt(i);
            for node in lattice.layer(i) {
                acc += lattice.node_prob(node) * (beta * weights.big_a[node]).exp() * h(b, node) * dt;
            }
        }
        total += path.prob * acc;
    }
    total
}

/// `𝐄 max_i e^{βA_i}|v_i|²` with one node-indexed vector per B-path.
pub fn s2_norm(lattice: &ScenarioLattice, weights: &NodeWeights, beta: f64, values: &[&[f64]]) -> Result<f64> {
    check_beta(beta)?;
    let mut total = 0.0;
    for (path, v) in lattice.b_paths().iter().zip(values) {
        if v.len() != lattice.n_nodes() {
            return Err(Error::Dimension("process length does not match the lattice".into()));
        }
        let score: Vec<f64> = v.iter().zip(&weights.big_a).map(|(x, a)| (beta * a).exp() * x * x).collect();
        let e_max = expected_max(lattice, &score);
        total += path.prob * e_max;
    }
    Ok(total)
}

/// `𝐄 max_i score_i` along a path of the lattice.
fn expected_max(lattice: &ScenarioLattice, score: &[f64]) -> f64 {
    match lattice.topology() {
        Topology::Tree => expected_path_max(lattice, score),
        Topology::Recombining => expected_path_max_by_levels(lattice, score),
    }
}

/// Running maximum carried down the tree.
fn expected_path_max(lattice: &ScenarioLattice, score: &[f64]) -> f64 {
    let mut running = score.to_vec();
    for i in 0..lattice.n_steps() {
        for node in lattice.layer(i) {
            for (child, _) in lattice.children(node) {
                running[child] = running[child].max(running[node]);
            }
        }
    }
    lattice.leaves().map(|leaf| lattice.node_prob(leaf) * running[leaf]).sum()
}

/// `𝐄 max = Σ_k (x_k − x_{k−1}) P(max ≥ x_k)` over the sorted distinct
/// scores; each hitting probability is one forward pass. Valid on any
/// topology for nonnegative scores.
pub(crate) fn expected_path_max_by_levels(lattice: &ScenarioLattice, score: &[f64]) -> f64 {
    let mut levels: Vec<f64> = score.iter().copied().filter(|s| *s > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    // flattened edges in forward order so each pass is a tight loop
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..lattice.n_steps() {
        for node in lattice.layer(i) {
            edges.extend(lattice.children(node).map(|(child, branch)| (node, child, branch.prob)));
        }
    }
    let mut avoid = vec![0.0; lattice.n_nodes()];
    let mut total = 0.0;
    let mut prev = 0.0;
    for &level in &levels {
        avoid.iter_mut().for_each(|v| *v = 0.0);
        avoid[0] = if score[0] < level { 1.0 } else { 0.0 };
        for &(node, child, prob) in &edges {
            if score[child] < level {
                avoid[child] += avoid[node] * prob;
            }
        }
        let miss: f64 = lattice.leaves().map(|leaf| avoid[leaf]).sum();
        total += (level - prev) * (1.0 - miss);
        prev = level;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::StochasticLipschitzData;
    use crate::lattice::{build_lattice, BPathSpec, LatticeConfig, Mark};

    fn weights(lattice: &ScenarioLattice, a2: f64) -> NodeWeights {
        StochasticLipschitzData::constant(a2, 0.0, 0.0, 0.0, 0.5).node_weights(lattice).unwrap()
    }

    #[test]
    fn constant_process_integral_converges_to_closed_form() {
        // ∫₀¹ e^t dt = e − 1; left sums increase toward it
        let mut last = 0.0;
        for n in [4usize, 8, 12] {
            let l = build_lattice(&LatticeConfig::new(n, 1.0).with_topology(Topology::Recombining)).unwrap();
            let w = weights(&l, 1.0);
            let v = time_integral(&l, &w, 1.0, |_, node| w.a2[node]);
            let left: f64 = (0..n).map(|i| (i as f64 / n as f64).exp() / n as f64).sum();
            assert!((v - left).abs() < 1e-13);
            assert!(v > last && v < std::f64::consts::E - 1.0);
            last = v;
        }
        let l = build_lattice(&LatticeConfig::new(1000, 1.0).with_topology(Topology::Recombining)).unwrap();
        let w = weights(&l, 1.0);
        let v = time_integral(&l, &w, 1.0, |_, node| w.a2[node]);
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-3);
    }

    #[test]
    fn zero_process_has_zero_norms() {
        let l =
            build_lattice(&LatticeConfig::new(2, 1.0).with_marks(vec![Mark { value: 1.0, intensity: 0.5 }])).unwrap();
        let w = weights(&l, 1.0);
        let zeros = vec![0.0; l.n_nodes()];
        let r = weighted_norms(&l, &w, 2.0, &[ThetaRef { y: &zeros, y_plus: &zeros, z: &zeros, u: &zeros }]).unwrap();
        assert_eq!((r.s2beta, r.m2a_beta, r.m2beta_z, r.l2beta_u, r.bundle), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn two_term_sup() {
        let l = build_lattice(&LatticeConfig::new(1, 0.5)).unwrap();
        let w = weights(&l, 3.0);
        let y = [2.0, 1.0, 1.0];
        let s2 = s2_norm(&l, &w, 1.0, &[&y]).unwrap();
        assert_eq!(s2, f64::max(4.0, (1.0f64 * 3.0 * 0.5).exp()));
    }

    #[test]
    fn sup_sees_right_limits() {
        let l = build_lattice(&LatticeConfig::new(1, 0.5)).unwrap();
        let w = weights(&l, 3.0);
        let (y, z) = ([3.0, 1.0, 1.0], [0.0; 3]);
        let at_nodes = weighted_norms(&l, &w, 1.0, &[ThetaRef { y: &y, y_plus: &y, z: &z, u: &[] }]).unwrap();
        let y_plus = [-4.0, 1.0, 1.0];
        let with_limit = weighted_norms(&l, &w, 1.0, &[ThetaRef { y: &y, y_plus: &y_plus, z: &z, u: &[] }]).unwrap();
        // leaves weigh e^{1.5} < 9, so the root decides the sup
        assert_eq!(at_nodes.s2beta, 9.0);
        assert_eq!(with_limit.s2beta, 16.0);
        assert_eq!(with_limit.m2a_beta, at_nodes.m2a_beta);
    }

    #[test]
    fn level_method_matches_running_max_on_trees() {
        let cfg = LatticeConfig::new(3, 1.0).with_marks(vec![Mark { value: 1.0, intensity: 0.4 }]);
        let l = build_lattice(&cfg).unwrap();
        let score: Vec<f64> = (0..l.n_nodes()).map(|n| ((n * 37 % 11) as f64).sin().abs()).collect();
        let a = expected_path_max(&l, &score);
        let b = expected_path_max_by_levels(&l, &score);
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }

    #[test]
    fn recombining_s2_matches_equivalent_tree() {
        let tree = build_lattice(&LatticeConfig::new(4, 1.0)).unwrap();
        let rec = build_lattice(&LatticeConfig::new(4, 1.0).with_topology(Topology::Recombining)).unwrap();
        // a Markov process: value depends on the number of up moves only
        let ups = |l: &ScenarioLattice| {
            let mut u = vec![0usize; l.n_nodes()];
            for i in 0..4 {
                for node in l.layer(i) {
                    for (child, br) in l.children(node) {
                        u[child] = u[node] + usize::from(br.dw[0] > 0.0);
                    }
                }
            }
            u
        };
        let f = |i: usize, k: usize| ((i * 3 + k * 7) % 5) as f64 - 2.0;
        let vt: Vec<f64> = ups(&tree).iter().enumerate().map(|(n, k)| f(tree.time_index(n), *k)).collect();
        let vr: Vec<f64> = ups(&rec).iter().enumerate().map(|(n, k)| f(rec.time_index(n), *k)).collect();
        let a = s2_norm(&tree, &weights(&tree, 1.0), 0.7, &[&vt]).unwrap();
        let b = s2_norm(&rec, &weights(&rec, 1.0), 0.7, &[&vr]).unwrap();
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    }

    #[test]
    fn rejects_bad_beta_and_lengths() {
        let l = build_lattice(&LatticeConfig::new(1, 1.0).with_b_paths(BPathSpec::Binary(Some(2)))).unwrap();
        let w = weights(&l, 1.0);
        let y = vec![1.0; 3];
        assert!(matches!(s2_norm(&l, &w, 0.0, &[&y, &y]), Err(Error::InvalidBeta(_))));
        let t = ThetaRef { y: &y, y_plus: &y, z: &y, u: &[] };
        assert!(weighted_norms(&l, &w, 1.0, &[t]).is_err());
        assert!(weighted_norms(&l, &w, 1.0, &[t, t]).is_ok());
    }
}
