//! Discrete Mertens decomposition `Ỹ_i = N_i − K_i − C_{i−1}`.
//!
//! `ΔC_i = Ỹ_i − Ỹ_{i+}`, `ΔK_{i+1} = Ỹ_{i+} − 𝐄[Ỹ_{i+1}]` and
//! `ΔN_{i+1} = Ỹ_{i+1} − 𝐄[Ỹ_{i+1}]`, with `N_0 = Ỹ_0`.

use crate::error::{Error, Result};
use crate::lattice::{ScenarioLattice, Topology};

const SUPERMARTINGALE_TOL: f64 = 1e-12;

/// Node-indexed parts on one B-path; `c[node]` includes `ΔC` at the node.
#[derive(Clone, Debug, PartialEq)]
pub struct MertensDecomposition {
    pub n: Vec<f64>,
    pub k: Vec<f64>,
    pub k_d: Vec<f64>,
    pub c: Vec<f64>,
}

/// Splits a supermartingale with right values into its martingale part and
/// the nondecreasing `K` (predictable) and `C` (right jumps).
pub fn mertens_split(
    lattice: &ScenarioLattice,
    values: &[f64],
    right_values: &[f64],
    predictable: &[bool],
    right_jump_times: &[bool],
) -> Result<MertensDecomposition> {
    let n_nodes = lattice.n_nodes();
    let n_steps = lattice.n_steps();
    if lattice.topology() != Topology::Tree {
        return Err(Error::Unsupported("the decomposition is pathwise and needs a tree lattice".into()));
    }
    if values.len() != n_nodes || right_values.len() != n_nodes {
        return Err(Error::Dimension(format!("expected {n_nodes} node values")));
    }
    if predictable.len() != n_steps + 1 || right_jump_times.len() != n_steps + 1 {
        return Err(Error::Dimension(format!("expected {} time flags", n_steps + 1)));
    }
    let mut out = MertensDecomposition {
        n: vec![0.0; n_nodes],
        k: vec![0.0; n_nodes],
        k_d: vec![0.0; n_nodes],
        c: vec![0.0; n_nodes],
    };
    let jump_at = |node: usize| -> Result<f64> {
        let dc = values[node] - right_values[node];
        let i = lattice.time_index(node);
        if dc < -SUPERMARTINGALE_TOL {
            return Err(Error::NotSupermartingale { node, excess: -dc });
        }
        if dc != 0.0 && !right_jump_times[i] {
            return Err(Error::Hypothesis(format!(
                "right jump at node {node}, but t_{i} is not a declared right-jump time"
            )));
        }
        Ok(dc)
    };
    out.n[0] = values[0];
    out.c[0] = jump_at(0)?;
    for i in 0..n_steps {
        for node in lattice.layer(i) {
            let mean = lattice.conditional_expectation(values, node)?;
            let dk = right_values[node] - mean;
            if dk < -SUPERMARTINGALE_TOL {
                return Err(Error::NotSupermartingale { node, excess: -dk });
            }
            for (child, _) in lattice.children(node) {
                out.n[child] = out.n[node] + values[child] - mean;
                out.k[child] = out.k[node] + dk;
                out.k_d[child] = out.k_d[node] + if predictable[i + 1] { dk } else { 0.0 };
                out.c[child] = out.c[node] + jump_at(child)?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeConfig};

    /// Deterministic values along a one-branch-per-step reading of a binary tree.
    fn by_time(l: &ScenarioLattice, v: &[f64]) -> Vec<f64> {
        (0..l.n_nodes()).map(|n| v[l.time_index(n)]).collect()
    }

    #[test]
    fn deterministic_decreasing() {
        let l = build_lattice(&LatticeConfig::new(2, 2.0)).unwrap();
        let y = by_time(&l, &[3.0, 2.0, 2.0]);
        let m = mertens_split(&l, &y, &y, &[false; 3], &[false; 3]).unwrap();
        assert!(m.n.iter().all(|v| *v == 3.0));
        assert_eq!(by_time(&l, &[0.0, 1.0, 1.0]), m.k);
        assert!(m.c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn martingale_input() {
        let l = build_lattice(&LatticeConfig::new(2, 1.0)).unwrap();
        let mut y = vec![0.0; l.n_nodes()];
        for i in 0..2 {
            for node in l.layer(i) {
                for (child, br) in l.children(node) {
                    y[child] = y[node] + br.dw[0];
                }
            }
        }
        let m = mertens_split(&l, &y, &y, &[false; 3], &[false; 3]).unwrap();
        assert!(m.n.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(m.k.iter().all(|v| v.abs() < 1e-15));
        assert!(m.c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn right_jump_feeds_c() {
        let l = build_lattice(&LatticeConfig::new(1, 1.0)).unwrap();
        let y = vec![3.0, 2.0, 2.0];
        let yr = vec![2.0, 2.0, 2.0];
        let m = mertens_split(&l, &y, &yr, &[false; 2], &[true, false]).unwrap();
        assert_eq!(m.c, vec![1.0, 1.0, 1.0]);
        assert!(m.k.iter().all(|v| *v == 0.0));
        assert!(m.n.iter().all(|v| *v == 3.0));
        for node in 0..3 {
            let c_before = m.c[node] - (y[node] - yr[node]);
            assert_eq!(y[node], m.n[node] - m.k[node] - c_before);
        }
    }

    #[test]
    fn predictable_flags_route_k() {
        let l = build_lattice(&LatticeConfig::new(2, 2.0)).unwrap();
        let y = by_time(&l, &[3.0, 2.0, 1.5]);
        let m = mertens_split(&l, &y, &y, &[false, false, true], &[false; 3]).unwrap();
        assert_eq!(m.k_d, by_time(&l, &[0.0, 0.0, 0.5]));
    }

    #[test]
    fn submartingale_rejected() {
        let l = build_lattice(&LatticeConfig::new(1, 1.0)).unwrap();
        let y = vec![1.0, 2.0, 2.0];
        assert!(matches!(
            mertens_split(&l, &y, &y, &[false; 2], &[false; 2]),
            Err(Error::NotSupermartingale { node: 0, .. })
        ));
    }
}
