//! Finite probability space on which every conditional expectation is an
//! exact weighted sum.
//!
//! The forward part is a branching tree of W-increments and jump marks: at
//! each step every coordinate of W moves by a symmetric binary (or trinomial)
//! increment and at most one jump occurs, carrying one of finitely many marks.
//! The backward Brownian motion B enters through a finite family of complete
//! paths; a solver conditions on the whole path, so each B-path sees the same
//! W/jump tree with known increments `ΔB_i`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest B-path family built by default (`binary` with no explicit count).
const MAX_DEFAULT_B_PATHS: usize = 1 << 12;

/// Largest number of lattice nodes we are willing to allocate.
const MAX_NODES: usize = 1 << 24;

/// Tolerance for probability sums and moment identities of user input.
const INPUT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    knots: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("at least one step is required".into()));
        }
        let knots =
            (0..=n_steps).map(|i| if i == n_steps { horizon } else { i as f64 * horizon / n_steps as f64 }).collect();
        Ok(Self { knots })
    }

    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidGrid("at least two knots are required".into()));
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first knot must be 0, got {}", knots[0])));
        }
        if let Some(i) = knots.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "knots must be strictly increasing (t_{} = {}, t_{} = {})",
                i,
                knots[i],
                i + 1,
                knots[i + 1]
            )));
        }
        Ok(Self { knots })
    }

    pub fn n_steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn t(&self, i: usize) -> f64 {
        self.knots[i]
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.knots[i + 1] - self.knots[i]
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Step index `i` with `t_i <= t < t_{i+1}`; the horizon maps to the last step.
    pub fn step_of(&self, t: f64) -> usize {
        let i = self.knots.partition_point(|&k| k <= t);
        i.saturating_sub(1).min(self.n_steps() - 1)
    }
}

/// A jump mark `e` with intensity `λ(e)`; the compensator over one step is `λ(e)·Δt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub value: f64,
    pub intensity: f64,
}

/// One complete backward-noise path with its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BPath {
    pub prob: f64,
    /// `increments[i]` is `ΔB_i`, one entry per B-coordinate.
    pub increments: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BPathSpec {
    /// A single path with `ΔB ≡ 0`: no backward noise.
    Zero,
    /// `k` sign paths of a one-dimensional binary walk; `None` means all `2^N`.
    Binary(Option<usize>),
    Explicit(Vec<BPath>),
}

impl Default for BPathSpec {
    fn default() -> Self {
        BPathSpec::Binary(None)
    }
}

impl Serialize for BPathSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BPathSpec::Zero => s.serialize_str("zero"),
            BPathSpec::Binary(None) => s.serialize_str("binary"),
            BPathSpec::Binary(Some(k)) => s.serialize_str(&format!("binary:{k}")),
            BPathSpec::Explicit(paths) => paths.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for BPathSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            List(Vec<BPath>),
        }
        match Raw::deserialize(d)? {
            Raw::List(paths) => Ok(BPathSpec::Explicit(paths)),
            Raw::Name(name) => match name.as_str() {
                "zero" => Ok(BPathSpec::Zero),
                "binary" => Ok(BPathSpec::Binary(None)),
                other => other
                    .strip_prefix("binary:")
                    .and_then(|k| k.parse().ok())
                    .map(|k| BPathSpec::Binary(Some(k)))
                    .ok_or_else(|| {
                        serde::de::Error::custom(format!(
                            "b_paths must be \"zero\", \"binary\", \"binary:k\" or a list, got {other:?}"
                        ))
                    }),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Atoms are path histories.
    #[default]
    Tree,
    /// Binomial lattice where up-down and down-up meet; one binary W, no marks.
    Recombining,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub n_steps: usize,
    pub horizon: f64,
    /// Explicit knots overriding the uniform grid.
    #[serde(default)]
    pub knots: Option<Vec<f64>>,
    /// Dimension `d` of W.
    #[serde(default = "one")]
    pub w_dim: usize,
    /// Support size per W-coordinate: 2 (±√Δt) or 3 (±√(3Δt), 0).
    #[serde(default = "two")]
    pub w_branching: usize,
    #[serde(default)]
    pub marks: Vec<Mark>,
    #[serde(default)]
    pub b_paths: BPathSpec,
    #[serde(default)]
    pub topology: Topology,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

impl LatticeConfig {
    pub fn new(n_steps: usize, horizon: f64) -> Self {
        Self {
            n_steps,
            horizon,
            knots: None,
            w_dim: 1,
            w_branching: 2,
            marks: Vec::new(),
            b_paths: BPathSpec::Zero,
            topology: Topology::Tree,
        }
    }

    pub fn with_marks(mut self, marks: Vec<Mark>) -> Self {
        self.marks = marks;
        self
    }

    pub fn with_b_paths(mut self, b_paths: BPathSpec) -> Self {
        self.b_paths = b_paths;
        self
    }

    pub fn with_w_dim(mut self, w_dim: usize) -> Self {
        self.w_dim = w_dim;
        self
    }

    pub fn with_topology(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }
}

/// One outcome of a single step.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub prob: f64,
    /// `ΔW`, one entry per W-coordinate.
    pub dw: Vec<f64>,
    /// Index of the mark that jumped, if any.
    pub jump: Option<usize>,
    /// Compensated increments `Δμ̃(e) = 1{jump = e} − λ(e)Δt`, one per mark.
    pub dmu: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ScenarioLattice {
    grid: TimeGrid,
    w_dim: usize,
    w_branching: usize,
    marks: Vec<Mark>,
    b_paths: Vec<BPath>,
    b_dim: usize,
    topology: Topology,
    branches: Vec<Vec<Branch>>,
    layer_start: Vec<usize>,
    node_prob: Vec<f64>,
}

/// Builds the lattice described by `config`. Deterministic; no randomness involved.
pub fn build_lattice(config: &LatticeConfig) -> Result<ScenarioLattice> {
    let grid = match &config.knots {
        Some(knots) => {
            let grid = TimeGrid::from_knots(knots.clone())?;
            if grid.n_steps() != config.n_steps {
                return Err(Error::InvalidGrid(format!(
                    "{} knots given for n_steps = {}",
                    knots.len(),
                    config.n_steps
                )));
            }
            grid
        }
        None => TimeGrid::uniform(config.horizon, config.n_steps)?,
    };
    ScenarioLattice::new(grid, config)
}

impl ScenarioLattice {
    fn new(grid: TimeGrid, config: &LatticeConfig) -> Result<Self> {
        let n = grid.n_steps();
        if config.w_dim == 0 {
            return Err(Error::InvalidLattice("w_dim must be at least 1".into()));
        }
        if !matches!(config.w_branching, 2 | 3) {
            return Err(Error::InvalidLattice(format!("w_branching must be 2 or 3, got {}", config.w_branching)));
        }
        for (e, mark) in config.marks.iter().enumerate() {
            if !(mark.intensity.is_finite() && mark.intensity >= 0.0) {
                return Err(Error::InvalidLattice(format!("mark {e} has invalid intensity {}", mark.intensity)));
            }
        }
        if config.topology == Topology::Recombining
            && (config.w_dim != 1 || config.w_branching != 2 || !config.marks.is_empty())
        {
            return Err(Error::Unsupported(
                "recombining topology requires one binary W-coordinate and no marks".into(),
            ));
        }

        let mut branches = Vec::with_capacity(n);
        for i in 0..n {
            branches.push(step_branches(i, grid.dt(i), config)?);
        }

        let width = branches.first().map_or(1, Vec::len);
        let mut layer_start = Vec::with_capacity(n + 2);
        let mut total = 0usize;
        for i in 0..=n {
            layer_start.push(total);
            let size = match config.topology {
                Topology::Tree => width
                    .checked_pow(i as u32)
                    .filter(|s| *s <= MAX_NODES)
                    .ok_or_else(|| Error::InvalidLattice(format!("layer {i} exceeds {MAX_NODES} nodes")))?,
                Topology::Recombining => i + 1,
            };
            total = total
                .checked_add(size)
                .filter(|t| *t <= MAX_NODES)
                .ok_or_else(|| Error::InvalidLattice(format!("lattice exceeds {MAX_NODES} nodes")))?;
        }
        layer_start.push(total);

        let (b_paths, b_dim) = build_b_paths(&config.b_paths, &grid)?;

        let mut lattice = Self {
            grid,
            w_dim: config.w_dim,
            w_branching: config.w_branching,
            marks: config.marks.clone(),
            b_paths,
            b_dim,
            topology: config.topology,
            branches,
            layer_start,
            node_prob: Vec::new(),
        };
        let mut prob = vec![0.0; total];
        prob[0] = 1.0;
        for i in 0..n {
            for node in lattice.layer(i) {
                for (child, branch) in lattice.children(node) {
                    prob[child] += prob[node] * branch.prob;
                }
            }
        }
        lattice.node_prob = prob;
        Ok(lattice)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn w_dim(&self) -> usize {
        self.w_dim
    }

    pub fn w_branching(&self) -> usize {
        self.w_branching
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn n_marks(&self) -> usize {
        self.marks.len()
    }

    /// Mark intensities `λ(e)`, the weights of `‖·‖_λ`.
    pub fn lambda(&self) -> Vec<f64> {
        self.marks.iter().map(|m| m.intensity).collect()
    }

    pub fn b_paths(&self) -> &[BPath] {
        &self.b_paths
    }

    pub fn n_b_paths(&self) -> usize {
        self.b_paths.len()
    }

    /// Dimension `ℓ` of B.
    pub fn b_dim(&self) -> usize {
        self.b_dim
    }

    pub fn b_increment(&self, b_path: usize, step: usize) -> &[f64] {
        &self.b_paths[b_path].increments[step]
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn branches(&self, step: usize) -> &[Branch] {
        &self.branches[step]
    }

    pub fn n_nodes(&self) -> usize {
        self.layer_start[self.layer_start.len() - 1]
    }

    /// Node ids of the layer at time index `i`.
    pub fn layer(&self, i: usize) -> Range<usize> {
        self.layer_start[i]..self.layer_start[i + 1]
    }

    pub fn leaves(&self) -> Range<usize> {
        self.layer(self.n_steps())
    }

    pub fn time_index(&self, node: usize) -> usize {
        self.layer_start.partition_point(|&s| s <= node) - 1
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node >= self.layer_start[self.n_steps()]
    }

    /// Unconditional probability of reaching `node` (summed over paths when recombining).
    pub fn node_prob(&self, node: usize) -> f64 {
        self.node_prob[node]
    }

    pub fn child(&self, node: usize, branch: usize) -> usize {
        let i = self.time_index(node);
        let offset = node - self.layer_start[i];
        match self.topology {
            Topology::Tree => self.layer_start[i + 1] + offset * self.branches[i].len() + branch,
            // branch 0 is the up move
            Topology::Recombining => self.layer_start[i + 1] + offset + usize::from(branch == 0),
        }
    }

    /// Children of a non-terminal node with the branch leading to each.
    pub fn children(&self, node: usize) -> impl Iterator<Item = (usize, &Branch)> + '_ {
        let i = self.time_index(node);
        let branches: &[Branch] = if i < self.n_steps() { &self.branches[i] } else { &[] };
        branches.iter().enumerate().map(move |(b, branch)| (self.child(node, b), branch))
    }

    /// Probability-weighted sum of `values` over the children of `node`.
    ///
    /// `values` is indexed by node id; a NaN or out-of-range entry at a child
    /// counts as missing. The B-path is held fixed; only W/jump branches are
    /// averaged.
    pub fn conditional_expectation(&self, values: &[f64], node: usize) -> Result<f64> {
        let mut acc = 0.0;
        for (child, branch) in self.children(node) {
            match values.get(child) {
                Some(v) if !v.is_nan() => acc += branch.prob * v,
                _ => return Err(Error::MissingChildValue { node, child }),
            }
        }
        Ok(acc)
    }

    /// Number of atoms in the subtree rooted at `node`.
    pub fn subtree_size(&self, node: usize) -> usize {
        let i = self.time_index(node);
        let n = self.n_steps();
        match self.topology {
            Topology::Tree => {
                let width = self.branches.first().map_or(1, Vec::len);
                (0..=(n - i)).map(|k| width.pow(k as u32)).sum()
            }
            Topology::Recombining => (1..=(n - i + 1)).sum(),
        }
    }
}

fn step_branches(step: usize, dt: f64, config: &LatticeConfig) -> Result<Vec<Branch>> {
    let total_jump: f64 = config.marks.iter().map(|m| m.intensity * dt).sum();
    if total_jump >= 1.0 {
        return Err(Error::JumpIntensity { step, value: total_jump });
    }

    let w_points: Vec<(f64, f64)> = match config.w_branching {
        2 => vec![(dt.sqrt(), 0.5), (-dt.sqrt(), 0.5)],
        _ => vec![((3.0 * dt).sqrt(), 1.0 / 6.0), (0.0, 2.0 / 3.0), (-(3.0 * dt).sqrt(), 1.0 / 6.0)],
    };

    let combos = w_points.len().pow(config.w_dim as u32);
    let mut out = Vec::with_capacity(combos * (1 + config.marks.len()));
    for combo in 0..combos {
        let mut dw = vec![0.0; config.w_dim];
        let mut w_prob = 1.0;
        let mut rest = combo;
        for k in (0..config.w_dim).rev() {
            let (value, p) = w_points[rest % w_points.len()];
            rest /= w_points.len();
            dw[k] = value;
            w_prob *= p;
        }
        for slot in 0..=config.marks.len() {
            let jump = slot.checked_sub(1);
            let jump_prob = match jump {
                None => 1.0 - total_jump,
                Some(e) => config.marks[e].intensity * dt,
            };
            let dmu = config
                .marks
                .iter()
                .enumerate()
                .map(|(e, m)| f64::from(u8::from(jump == Some(e))) - m.intensity * dt)
                .collect();
            out.push(Branch { prob: w_prob * jump_prob, dw: dw.clone(), jump, dmu });
        }
    }
    Ok(out)
}

fn build_b_paths(spec: &BPathSpec, grid: &TimeGrid) -> Result<(Vec<BPath>, usize)> {
    let n = grid.n_steps();
    match spec {
        BPathSpec::Zero => Ok((vec![BPath { prob: 1.0, increments: vec![vec![0.0]; n] }], 1)),
        BPathSpec::Binary(count) => {
            let full = u32::try_from(n).ok().and_then(|n| 1usize.checked_shl(n));
            let k = match count {
                Some(k) => *k,
                None => full.filter(|f| *f <= MAX_DEFAULT_B_PATHS).ok_or_else(|| {
                    Error::InvalidLattice(format!(
                        "default binary B-path family has 2^{n} paths; use \"binary:k\" or \"zero\""
                    ))
                })?,
            };
            if k < 2 || !k.is_power_of_two() || full.is_some_and(|f| k > f) {
                return Err(Error::InvalidLattice(format!(
                    "binary B-path count must be a power of two in [2, 2^{n}], got {k}"
                )));
            }
            // path j takes sign bit (i mod m) of j at step i, so every step is
            // an exact ±√Δt coin across the family
            let bits = k.trailing_zeros() as usize;
            let paths = (0..k)
                .map(|j| BPath {
                    prob: 1.0 / k as f64,
                    increments: (0..n)
                        .map(|i| {
                            let up = (j >> (i % bits)) & 1 == 0;
                            let h = grid.dt(i).sqrt();
                            vec![if up { h } else { -h }]
                        })
                        .collect(),
                })
                .collect();
            Ok((paths, 1))
        }
        BPathSpec::Explicit(paths) => {
            let first = paths.first().ok_or_else(|| Error::InvalidLattice("explicit B-path list is empty".into()))?;
            let dim = first.increments.first().map_or(1, Vec::len);
            if dim == 0 {
                return Err(Error::InvalidLattice("B-increments must have at least one coordinate".into()));
            }
            let mut total = 0.0;
            for (j, path) in paths.iter().enumerate() {
                if !(path.prob.is_finite() && (0.0..=1.0).contains(&path.prob)) {
                    return Err(Error::InvalidLattice(format!("B-path {j} has probability {}", path.prob)));
                }
                if path.increments.len() != n || path.increments.iter().any(|inc| inc.len() != dim) {
                    return Err(Error::InvalidLattice(format!(
                        "B-path {j} must have {n} increments of dimension {dim}"
                    )));
                }
                if path.increments.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidLattice(format!("B-path {j} has a non-finite increment")));
                }
                total += path.prob;
            }
            if (total - 1.0).abs() > INPUT_TOL {
                return Err(Error::InvalidLattice(format!("B-path probabilities sum to {total}")));
            }
            for i in 0..n {
                for k in 0..dim {
                    let mean: f64 = paths.iter().map(|p| p.prob * p.increments[i][k]).sum();
                    if mean.abs() > INPUT_TOL {
                        return Err(Error::InvalidLattice(format!("ΔB at step {i}, coordinate {k} has mean {mean}")));
                    }
                }
            }
            Ok((paths.clone(), dim))
        }
    }
}

/// An adapted exercise policy on one B-path's W/jump tree.
///
/// Stored as the set of atoms where the rule stops; along every path from
/// the root exactly one of them is visited.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoppingRule {
    pub b_path: usize,
    pub root: usize,
    stop_nodes: Vec<usize>,
}

impl StoppingRule {
    pub fn stop_nodes(&self) -> &[usize] {
        &self.stop_nodes
    }

    pub fn stops_at(&self, node: usize) -> bool {
        self.stop_nodes.binary_search(&node).is_ok()
    }
}

pub const DEFAULT_ATOM_BUDGET: usize = 64;

/// Every stopping rule on the tree of `b_path`, starting at the root.
pub fn enumerate_stopping_rules(lattice: &ScenarioLattice, b_path: usize, budget: usize) -> Result<Vec<StoppingRule>> {
    enumerate_stopping_rules_from(lattice, b_path, 0, budget)
}

/// Every stopping rule valued in `[t_ν, T]` on the subtree below `root`.
///
/// A terminal `root` is the degenerate horizon: the only rule stops at once.
pub fn enumerate_stopping_rules_from(
    lattice: &ScenarioLattice,
    b_path: usize,
    root: usize,
    budget: usize,
) -> Result<Vec<StoppingRule>> {
    if lattice.topology() != Topology::Tree {
        return Err(Error::Unsupported("stopping-rule enumeration needs a tree lattice".into()));
    }
    if b_path >= lattice.n_b_paths() {
        return Err(Error::Dimension(format!("B-path {b_path} out of range")));
    }
    if root >= lattice.n_nodes() {
        return Err(Error::Dimension(format!("node {root} out of range")));
    }
    let atoms = lattice.subtree_size(root);
    if atoms > budget {
        return Err(Error::AtomBudget { atoms, budget });
    }
    let mut sets = stop_sets(lattice, root);
    for set in &mut sets {
        set.sort_unstable();
    }
    Ok(sets.into_iter().map(|stop_nodes| StoppingRule { b_path, root, stop_nodes }).collect())
}

fn stop_sets(lattice: &ScenarioLattice, node: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![node]];
    if lattice.is_leaf(node) {
        return out;
    }
    // continue at `node`: combine one rule from each child subtree
    let mut combined: Vec<Vec<usize>> = vec![Vec::new()];
    for (child, _) in lattice.children(node) {
        let below = stop_sets(lattice, child);
        let mut next = Vec::with_capacity(combined.len() * below.len());
        for prefix in &combined {
            for tail in &below {
                let mut set = prefix.clone();
                set.extend_from_slice(tail);
                next.push(set);
            }
        }
        combined = next;
    }
    out.extend(combined);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize, marks: Vec<Mark>) -> ScenarioLattice {
        build_lattice(&LatticeConfig::new(n, n as f64).with_marks(marks)).unwrap()
    }

    #[test]
    fn one_step_binary_tree() {
        let l = build_lattice(&LatticeConfig::new(1, 1.0)).unwrap();
        assert_eq!(l.n_nodes(), 3);
        let probs: Vec<f64> = l.leaves().map(|n| l.node_prob(n)).collect();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn mark_branch_probabilities() {
        // λΔt = 0.1 with Δt = 0.5
        let cfg = LatticeConfig::new(2, 1.0).with_marks(vec![Mark { value: 1.0, intensity: 0.2 }]);
        let l = build_lattice(&cfg).unwrap();
        for step in 0..2 {
            let mut probs: Vec<f64> = l.branches(step).iter().map(|b| b.prob).collect();
            probs.sort_by(f64::total_cmp);
            assert_eq!(probs, vec![0.05, 0.05, 0.45, 0.45]);
        }
        let dmu: Vec<f64> = l.layer(1).map(|n| l.branches(0)[n - 1].dmu[0]).collect();
        let dmu_values: Vec<f64> = (0..l.n_nodes()).map(|n| if n == 0 { f64::NAN } else { dmu[(n - 1) % 4] }).collect();
        assert!(l.conditional_expectation(&dmu_values, 0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn rejects_jump_probability_above_one() {
        let cfg = LatticeConfig::new(1, 1.0).with_marks(vec![Mark { value: 0.0, intensity: 1.2 }]);
        assert!(matches!(build_lattice(&cfg), Err(Error::JumpIntensity { .. })));
    }

    #[test]
    fn rejects_non_increasing_knots() {
        let mut cfg = LatticeConfig::new(2, 1.0);
        cfg.knots = Some(vec![0.0, 0.7, 0.5]);
        assert!(matches!(build_lattice(&cfg), Err(Error::InvalidGrid(_))));
        assert!(TimeGrid::from_knots(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_knots(vec![0.1, 0.5]).is_err());
    }

    #[test]
    fn conditional_expectation_examples() {
        let l = lattice(1, vec![]);
        assert_eq!(l.conditional_expectation(&[f64::NAN, 1.0, 3.0], 0).unwrap(), 2.0);
        assert_eq!(l.conditional_expectation(&[0.0, 7.5, 7.5], 0).unwrap(), 7.5);
        assert!(matches!(
            l.conditional_expectation(&[0.0, 1.0], 0),
            Err(Error::MissingChildValue { node: 0, child: 2 })
        ));
        assert!(l.conditional_expectation(&[0.0, 1.0, f64::NAN], 0).is_err());
    }

    #[test]
    fn w_moments_are_exact() {
        for branching in [2, 3] {
            let mut cfg = LatticeConfig::new(2, 1.0).with_w_dim(2);
            cfg.w_branching = branching;
            cfg.marks = vec![Mark { value: 1.0, intensity: 0.3 }, Mark { value: -1.0, intensity: 0.5 }];
            let l = build_lattice(&cfg).unwrap();
            let dt = l.grid().dt(0);
            let br = l.branches(0);
            assert!((br.iter().map(|b| b.prob).sum::<f64>() - 1.0).abs() < 1e-15);
            for k in 0..2 {
                let mean: f64 = br.iter().map(|b| b.prob * b.dw[k]).sum();
                let var: f64 = br.iter().map(|b| b.prob * b.dw[k] * b.dw[k]).sum();
                assert!(mean.abs() < 1e-15);
                assert!((var - dt).abs() < 1e-15);
            }
            for e in 0..2 {
                let mean: f64 = br.iter().map(|b| b.prob * b.dmu[e]).sum();
                assert!(mean.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn binary_b_family_moments() {
        let cfg = LatticeConfig::new(3, 1.5).with_b_paths(BPathSpec::Binary(Some(4)));
        let l = build_lattice(&cfg).unwrap();
        assert_eq!(l.n_b_paths(), 4);
        for i in 0..3 {
            let mean: f64 = l.b_paths().iter().map(|p| p.prob * p.increments[i][0]).sum();
            let var: f64 = l.b_paths().iter().map(|p| p.prob * p.increments[i][0].powi(2)).sum();
            assert!(mean.abs() < 1e-15);
            assert!((var - 0.5).abs() < 1e-15);
        }
        let full = build_lattice(&LatticeConfig::new(3, 1.0).with_b_paths(BPathSpec::Binary(None))).unwrap();
        assert_eq!(full.n_b_paths(), 8);
        let mut signs: Vec<Vec<bool>> =
            full.b_paths().iter().map(|p| p.increments.iter().map(|v| v[0] > 0.0).collect()).collect();
        signs.sort();
        signs.dedup();
        assert_eq!(signs.len(), 8);
        assert!(build_lattice(&LatticeConfig::new(3, 1.0).with_b_paths(BPathSpec::Binary(Some(3)))).is_err());
    }

    #[test]
    fn explicit_b_paths_validated() {
        let bad = BPathSpec::Explicit(vec![BPath { prob: 1.0, increments: vec![vec![0.1]] }]);
        assert!(build_lattice(&LatticeConfig::new(1, 1.0).with_b_paths(bad)).is_err());
        let good = BPathSpec::Explicit(vec![
            BPath { prob: 0.5, increments: vec![vec![0.1, 1.0]] },
            BPath { prob: 0.5, increments: vec![vec![-0.1, -1.0]] },
        ]);
        let l = build_lattice(&LatticeConfig::new(1, 1.0).with_b_paths(good)).unwrap();
        assert_eq!(l.b_dim(), 2);
    }

    #[test]
    fn b_path_spec_parses() {
        let s: BPathSpec = serde_json::from_str("\"binary:4\"").unwrap();
        assert_eq!(s, BPathSpec::Binary(Some(4)));
        let s: BPathSpec = serde_json::from_str("\"zero\"").unwrap();
        assert_eq!(s, BPathSpec::Zero);
        assert!(serde_json::from_str::<BPathSpec>("\"trinary\"").is_err());
    }

    #[test]
    fn recombining_layout() {
        let cfg = LatticeConfig::new(3, 1.0).with_topology(Topology::Recombining);
        let l = build_lattice(&cfg).unwrap();
        assert_eq!(l.n_nodes(), 10);
        // up from the root lands on the upper node
        assert_eq!(l.child(0, 0), 2);
        assert_eq!(l.child(0, 1), 1);
        assert_eq!(l.child(l.child(0, 0), 1), l.child(l.child(0, 1), 0));
        let probs: Vec<f64> = l.leaves().map(|n| l.node_prob(n)).collect();
        assert_eq!(probs, vec![0.125, 0.375, 0.375, 0.125]);
        let with_mark = cfg.with_marks(vec![Mark { value: 0.0, intensity: 0.1 }]);
        assert!(matches!(build_lattice(&with_mark), Err(Error::Unsupported(_))));
    }

    #[test]
    fn stopping_rule_counts() {
        let l = lattice(1, vec![]);
        let rules = enumerate_stopping_rules(&l, 0, DEFAULT_ATOM_BUDGET).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].stop_nodes(), &[0]);
        assert_eq!(rules[1].stop_nodes(), &[1, 2]);

        // a terminal atom is the degenerate horizon
        let leaf = l.leaves().start;
        assert_eq!(enumerate_stopping_rules_from(&l, 0, leaf, DEFAULT_ATOM_BUDGET).unwrap().len(), 1);

        // R(leaf) = 1, R(node) = 1 + Π R(child)
        let l3 = lattice(3, vec![]);
        assert_eq!(enumerate_stopping_rules(&l3, 0, DEFAULT_ATOM_BUDGET).unwrap().len(), 26);
    }

    #[test]
    fn stopping_rules_cover_every_scenario() {
        let l = lattice(2, vec![Mark { value: 1.0, intensity: 0.1 }]);
        let rules = enumerate_stopping_rules(&l, 0, DEFAULT_ATOM_BUDGET).unwrap();
        assert_eq!(rules.len(), 17);
        for rule in &rules {
            // total probability of the stopping atoms is one: each scenario stops exactly once
            let mass: f64 = rule.stop_nodes().iter().map(|&n| l.node_prob(n)).sum();
            assert!((mass - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn atom_budget_refusal() {
        // 4 branches, 3 steps: 1 + 4 + 16 + 64 = 85 atoms
        let l = lattice(3, vec![Mark { value: 1.0, intensity: 0.1 }]);
        assert!(matches!(
            enumerate_stopping_rules(&l, 0, DEFAULT_ATOM_BUDGET),
            Err(Error::AtomBudget { atoms: 85, budget: 64 })
        ));
        // budget boundary: 63 atoms on a 5-step binary tree
        let l5 = lattice(5, vec![]);
        assert_eq!(l5.subtree_size(0), 63);
        assert!(enumerate_stopping_rules(&l5, 0, 62).is_err());
        assert!(enumerate_stopping_rules(&l5, 0, 63).is_ok());
        let mut cfg = LatticeConfig::new(3, 1.0);
        cfg.w_branching = 3;
        assert_eq!(build_lattice(&cfg).unwrap().subtree_size(0), 40);
    }
}
