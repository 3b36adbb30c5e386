//! Discrete solutions `(Y, Z, U, K, C)` of the reflected equation.
//!
//! One step of the scheme at node `i` on B-path `b`:
//!
//! ```text
//! ỹ       = 𝐄[Y_{i+1} | node] + f_i Δt + g_i·ΔB_i
//! Y_{i+}  = max(ỹ, ξ_{i+})        reflect = Y_{i+} − ỹ   (K increment over the step)
//! Y_i     = max(Y_{i+}, ξ_i)      ΔC_i    = Y_i − Y_{i+}
//! ```
//!
//! `Z`, `U` are the least-squares coefficients of `Y_{i+1}` on `ΔW`, `Δμ̃`;
//! whatever the increments cannot span is kept as the orthogonal martingale
//! increment `dn`, so the one-step identity
//! `Y_i = Y_{i+1} + fΔt + g·ΔB − Z·ΔW − U·Δμ̃ − dn + reflect + ΔC_i`
//! holds at every child.

mod decoupled;
mod martingale;
mod mertens;
mod minimal;
mod picard;
mod validate;

use serde::{Deserialize, Serialize};

use crate::coefficients::NodeWeights;
use crate::error::Result;
use crate::lattice::ScenarioLattice;
use crate::norms::{weighted_norms, NormReport, ThetaRef};

pub use decoupled::{solve_decoupled, DecoupledDrivers};
pub use martingale::{extract_martingale_components, MartingaleComponents};
pub use mertens::{mertens_split, MertensDecomposition};
pub use minimal::{minimal_solution_solve, MinimalOptions, MinimalOutcome};
pub use picard::{picard_solve, InitialIterate, PicardOptions, PicardTrace, TraceRow};
pub use validate::{validate_solution, DriverSource, ValidationReport};

/// Solution on one B-path; every vector is indexed by lattice node.
///
/// `z` holds `d` entries per node, `u` one per mark, `g_used` `ℓ` per node.
/// `reflect[node]` is the predictable K increment from `t_i` to `t_{i+1}`
/// decided at `node`; `dn[child]` is the unspanned martingale increment
/// arriving at `child`. Cumulative `k`, `k_d`, `c` are path functionals and
/// are NaN on recombining lattices, where only increments are node values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    pub y: Vec<f64>,
    pub y_plus: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub k: Vec<f64>,
    pub k_d: Vec<f64>,
    pub c: Vec<f64>,
    pub dn: Vec<f64>,
    pub reflect: Vec<f64>,
    pub f_used: Vec<f64>,
    pub g_used: Vec<f64>,
}

impl PathSolution {
    /// `ΔC_i = Y_i − Y_{i+}`.
    pub fn delta_c(&self, node: usize) -> f64 {
        self.y[node] - self.y_plus[node]
    }

    pub fn theta(&self) -> ThetaRef<'_> {
        ThetaRef { y: &self.y, y_plus: &self.y_plus, z: &self.z, u: &self.u }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub paths: Vec<PathSolution>,
    pub w_dim: usize,
    pub n_marks: usize,
    pub b_dim: usize,
}

impl Solution {
    pub fn y0(&self, b_path: usize) -> f64 {
        self.paths[b_path].y[0]
    }

    /// `𝐄 Y_0` over the B-path family.
    pub fn mean_y0(&self, lattice: &ScenarioLattice) -> f64 {
        lattice.b_paths().iter().zip(&self.paths).map(|(b, p)| b.prob * p.y[0]).sum()
    }

    pub fn norms(&self, lattice: &ScenarioLattice, weights: &NodeWeights, beta: f64) -> Result<NormReport> {
        let thetas: Vec<ThetaRef<'_>> = self.paths.iter().map(PathSolution::theta).collect();
        weighted_norms(lattice, weights, beta, &thetas)
    }

    /// Bundle norm of `self − other` in `(Y, Z, U)`, right limits included.
    pub fn bundle_distance(
        &self,
        other: &Solution,
        lattice: &ScenarioLattice,
        weights: &NodeWeights,
        beta: f64,
    ) -> Result<f64> {
        let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
        let parts: Vec<[Vec<f64>; 4]> = self
            .paths
            .iter()
            .zip(&other.paths)
            .map(|(p, q)| [diff(&p.y, &q.y), diff(&p.y_plus, &q.y_plus), diff(&p.z, &q.z), diff(&p.u, &q.u)])
            .collect();
        let thetas: Vec<ThetaRef<'_>> = parts.iter().map(|[y, y_plus, z, u]| ThetaRef { y, y_plus, z, u }).collect();
        Ok(weighted_norms(lattice, weights, beta, &thetas)?.bundle)
    }

    /// Largest node-wise `|Y − Y'|` over all B-paths.
    pub fn max_y_gap(&self, other: &Solution) -> f64 {
        self.paths
            .iter()
            .zip(&other.paths)
            .flat_map(|(p, q)| p.y.iter().zip(&q.y).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.paths
            .iter()
            .all(|p| [&p.y, &p.y_plus, &p.z, &p.u, &p.dn, &p.reflect].iter().all(|v| v.iter().all(|x| x.is_finite())))
    }
}
