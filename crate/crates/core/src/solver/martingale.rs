//! Projection of next-layer values on the one-step increments `(ΔW, Δμ̃)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::lattice::ScenarioLattice;

/// `Z`, `U` at a node and the residual left at each child (branch order).
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleComponents {
    pub mean: f64,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub residual: Vec<f64>,
}

/// Normal equations of one step; identical for every node of the step.
pub(crate) struct StepProjection {
    w_dim: usize,
    features: Vec<Vec<f64>>,
    probs: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl StepProjection {
    /// `None` when the increments are linearly dependent under the branch law.
    pub(crate) fn new(lattice: &ScenarioLattice, step: usize) -> Option<Self> {
        let branches = lattice.branches(step);
        let features: Vec<Vec<f64>> = branches.iter().map(|b| b.dw.iter().chain(&b.dmu).copied().collect()).collect();
        let probs: Vec<f64> = branches.iter().map(|b| b.prob).collect();
        let k = lattice.w_dim() + lattice.n_marks();
        let mut gram = DMatrix::<f64>::zeros(k, k);
        for (x, p) in features.iter().zip(&probs) {
            for a in 0..k {
                for b in 0..k {
                    gram[(a, b)] += p * x[a] * x[b];
                }
            }
        }
        let scale = (0..k).map(|a| gram[(a, a)]).fold(0.0, f64::max);
        let chol = Cholesky::new(gram)?;
        let pivot_floor = 1e-12 * scale.sqrt();
        if !(scale > 0.0) || (0..k).any(|a| !(chol.l_dirty()[(a, a)] > pivot_floor)) {
            return None;
        }
        Some(Self { w_dim: lattice.w_dim(), features, probs, chol })
    }

    /// Projects child values given in branch order.
    pub(crate) fn project(&self, values: &[f64]) -> MartingaleComponents {
        // same summation order as `ScenarioLattice::conditional_expectation`
        let mut mean = 0.0;
        for (v, p) in values.iter().zip(&self.probs) {
            mean += p * v;
        }
        let k = self.chol.l_dirty().nrows();
        let mut rhs = DVector::<f64>::zeros(k);
        for ((x, p), v) in self.features.iter().zip(&self.probs).zip(values) {
            for a in 0..k {
                rhs[a] += p * x[a] * (v - mean);
            }
        }
        let coef = self.chol.solve(&rhs);
        let residual = self
            .features
            .iter()
            .zip(values)
            .map(|(x, v)| v - mean - x.iter().zip(coef.iter()).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        MartingaleComponents {
            mean,
            z: coef.iter().take(self.w_dim).copied().collect(),
            u: coef.iter().skip(self.w_dim).copied().collect(),
            residual,
        }
    }
}

/// `(Z, U)` at `node` from node-indexed next-layer values.
pub fn extract_martingale_components(
    lattice: &ScenarioLattice,
    next_values: &[f64],
    node: usize,
) -> Result<MartingaleComponents> {
    if lattice.is_leaf(node) {
        return Err(Error::Dimension(format!("node {node} is terminal")));
    }
    let step = lattice.time_index(node);
    let projection = StepProjection::new(lattice, step).ok_or(Error::SingularDesign { node })?;
    let mut values = Vec::with_capacity(lattice.branches(step).len());
    for (child, _) in lattice.children(node) {
        match next_values.get(child) {
            Some(v) if !v.is_nan() => values.push(*v),
            _ => return Err(Error::MissingChildValue { node, child }),
        }
    }
    Ok(projection.project(&values))
}
