//! Irregular (right upper semi-continuous, làdlàg) barrier on the lattice.
//!
//! Each node carries the barrier value `ξ_i` and the value `ξ_{i+}` just after
//! `t_i`. Right jumps (`ξ_{i+} < ξ_i`) are only allowed at declared grid
//! times; left limits are the previous grid values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::ScenarioLattice;

#[derive(Clone, Debug, PartialEq)]
pub struct Barrier {
    main: Vec<f64>,
    right: Vec<f64>,
    right_jump_times: Vec<bool>,
    predictable: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BarrierShape {
    Constant {
        c: f64,
    },
    /// `(strike − S)^+` on the geometric walk `S = s0·up^{#up}·down^{#down}`
    /// driven by the sign of the first W-coordinate.
    PutPayoff {
        strike: f64,
        s0: f64,
        up: f64,
        down: f64,
    },
    /// One value per time index, identical across nodes.
    DeterministicSequence {
        values: Vec<f64>,
        #[serde(default)]
        right_values: Option<Vec<f64>>,
    },
    /// One value per node.
    Custom {
        values: Vec<f64>,
        #[serde(default)]
        right_values: Option<Vec<f64>>,
        #[serde(default)]
        right_jump_times: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    #[serde(flatten)]
    pub shape: BarrierShape,
    /// Time indices where the barrier has a predictable left jump.
    #[serde(default)]
    pub predictable_times: Vec<usize>,
}

impl From<BarrierShape> for BarrierSpec {
    fn from(shape: BarrierShape) -> Self {
        Self { shape, predictable_times: Vec::new() }
    }
}

/// Geometric walk `S` on the lattice: up on `ΔW₁ > 0`, down on `ΔW₁ < 0`.
pub fn geometric_walk(lattice: &ScenarioLattice, s0: f64, up: f64, down: f64) -> Vec<f64> {
    let mut s = vec![0.0; lattice.n_nodes()];
    s[0] = s0;
    for i in 0..lattice.n_steps() {
        for node in lattice.layer(i) {
            for (child, branch) in lattice.children(node) {
                let w = branch.dw[0];
                let factor = if w > 0.0 {
                    up
                } else if w < 0.0 {
                    down
                } else {
                    1.0
                };
                s[child] = s[node] * factor;
            }
        }
    }
    s
}

pub fn build_barrier(spec: &BarrierSpec, lattice: &ScenarioLattice) -> Result<Barrier> {
    let n_nodes = lattice.n_nodes();
    let n = lattice.n_steps();
    let per_time = |values: &[f64], what: &str| -> Result<Vec<f64>> {
        if values.len() != n + 1 {
            return Err(Error::InvalidBarrier(format!("{what} has {} entries, expected {}", values.len(), n + 1)));
        }
        Ok((0..n_nodes).map(|node| values[lattice.time_index(node)]).collect())
    };
    let (main, right, declared) = match &spec.shape {
        BarrierShape::Constant { c } => (vec![*c; n_nodes], None, Vec::new()),
        BarrierShape::PutPayoff { strike, s0, up, down } => {
            let s = geometric_walk(lattice, *s0, *up, *down);
            (s.iter().map(|s| (strike - s).max(0.0)).collect(), None, Vec::new())
        }
        BarrierShape::DeterministicSequence { values, right_values } => {
            let main = per_time(values, "values")?;
            let declared = match right_values {
                Some(r) => {
                    if r.len() != values.len() {
                        return Err(Error::InvalidBarrier("right_values length differs from values".into()));
                    }
                    (0..=n).filter(|&i| r[i] != values[i]).collect()
                }
                None => Vec::new(),
            };
            let right = right_values.as_deref().map(|r| per_time(r, "right_values")).transpose()?;
            (main, right, declared)
        }
        BarrierShape::Custom { values, right_values, right_jump_times } => {
            if values.len() != n_nodes || right_values.as_ref().is_some_and(|r| r.len() != n_nodes) {
                return Err(Error::InvalidBarrier(format!("custom barrier needs {n_nodes} node values")));
            }
            (values.clone(), right_values.clone(), right_jump_times.clone())
        }
    };
    let right = right.unwrap_or_else(|| main.clone());
    Barrier::new(lattice, main, right, &declared, &spec.predictable_times)
}

impl Barrier {
    /// Validates and assembles a barrier from node values.
    pub fn new(
        lattice: &ScenarioLattice,
        main: Vec<f64>,
        right: Vec<f64>,
        right_jump_times: &[usize],
        predictable_times: &[usize],
    ) -> Result<Self> {
        let n = lattice.n_steps();
        if main.len() != lattice.n_nodes() || right.len() != lattice.n_nodes() {
            return Err(Error::InvalidBarrier(format!("expected {} node values", lattice.n_nodes())));
        }
        let mut jumps = vec![false; n + 1];
        for &i in right_jump_times {
            if i >= n {
                return Err(Error::InvalidBarrier(format!(
                    "right jump declared at t_{i}; right jumps need i < {n} (ξ_T+ = ξ_T)"
                )));
            }
            jumps[i] = true;
        }
        let mut predictable = vec![false; n + 1];
        for &i in predictable_times {
            if i == 0 || i > n {
                return Err(Error::InvalidBarrier(format!("predictable time index {i} out of (0, {n}]")));
            }
            predictable[i] = true;
        }
        for node in 0..lattice.n_nodes() {
            let (x, xr) = (main[node], right[node]);
            if !x.is_finite() || !xr.is_finite() {
                return Err(Error::InvalidBarrier(format!("non-finite value at node {node}")));
            }
            let i = lattice.time_index(node);
            if jumps[i] {
                if xr > x {
                    return Err(Error::InvalidBarrier(format!(
                        "right value {xr} exceeds value {x} at node {node} (not right upper semi-continuous)"
                    )));
                }
            } else if xr != x {
                return Err(Error::InvalidBarrier(format!(
                    "right value differs from value at node {node}, but t_{i} is not a declared right-jump time"
                )));
            }
        }
        Ok(Self { main, right, right_jump_times: jumps, predictable })
    }

    /// Barrier without right jumps or predictable times.
    pub fn right_continuous(lattice: &ScenarioLattice, main: Vec<f64>) -> Result<Self> {
        let right = main.clone();
        Self::new(lattice, main, right, &[], &[])
    }

    pub fn value(&self, node: usize) -> f64 {
        self.main[node]
    }

    pub fn values(&self) -> &[f64] {
        &self.main
    }

    /// `ξ_{i+}`; equals `ξ_i` away from declared right jumps and at the horizon.
    pub fn right_limit(&self, node: usize) -> f64 {
        self.right[node]
    }

    pub fn right_values(&self) -> &[f64] {
        &self.right
    }

    pub fn is_right_jump_time(&self, i: usize) -> bool {
        self.right_jump_times[i]
    }

    pub fn is_predictable_time(&self, i: usize) -> bool {
        self.predictable[i]
    }

    pub fn predictable_flags(&self) -> &[bool] {
        &self.predictable
    }

    /// Time indices where some node has `ξ_i > ξ_{i+}`.
    pub fn right_jump_times(&self, lattice: &ScenarioLattice) -> Vec<usize> {
        let mut out: Vec<usize> =
            (0..self.main.len()).filter(|&n| self.main[n] > self.right[n]).map(|n| lattice.time_index(n)).collect();
        out.dedup();
        out
    }

    pub fn is_right_continuous(&self) -> bool {
        self.main == self.right
    }

    /// Node-wise barrier with every value raised by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            main: self.main.iter().map(|v| v + shift).collect(),
            right: self.right.iter().map(|v| v + shift).collect(),
            ..self.clone()
        }
    }
}
