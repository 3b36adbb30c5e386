//! Drivers `f`, `g` and the stochastic Lipschitz data that weights every norm.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{ScenarioLattice, TimeGrid, Topology};

/// A nonnegative coefficient process, piecewise constant on the grid.
///
/// `Scalar` broadcasts over steps, `Steps` holds one value per step and
/// `Nodes` one value per lattice node (tree lattices only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Process {
    Scalar(f64),
    Steps(Vec<f64>),
    Nodes { nodes: Vec<f64> },
}

impl Default for Process {
    fn default() -> Self {
        Process::Scalar(0.0)
    }
}

impl From<f64> for Process {
    fn from(v: f64) -> Self {
        Process::Scalar(v)
    }
}

impl Process {
    pub fn at(&self, step: usize, node: usize) -> f64 {
        match self {
            Process::Scalar(v) => *v,
            Process::Steps(v) => v[step.min(v.len() - 1)],
            Process::Nodes { nodes } => nodes[node],
        }
    }

    fn check(&self, name: &str, lattice: &ScenarioLattice) -> Result<()> {
        let values: &[f64] = match self {
            Process::Scalar(v) => std::slice::from_ref(v),
            Process::Steps(v) => {
                if v.len() != lattice.n_steps() {
                    return Err(Error::InvalidCoefficients(format!(
                        "{name} has {} step values, expected {}",
                        v.len(),
                        lattice.n_steps()
                    )));
                }
                v
            }
            Process::Nodes { nodes } => {
                if lattice.topology() != Topology::Tree {
                    return Err(Error::Unsupported(format!("node-indexed {name} requires a tree lattice")));
                }
                if nodes.len() != lattice.n_nodes() {
                    return Err(Error::InvalidCoefficients(format!(
                        "{name} has {} node values, expected {}",
                        nodes.len(),
                        lattice.n_nodes()
                    )));
                }
                nodes
            }
        };
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidCoefficients(format!("{name} has invalid value {v}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Stochastic Lipschitz in `(y, z, u)` with data `(γ, κ, σ, ϱ, α)`.
    Lipschitz,
    /// Linear growth `|f| ≤ ζ + γ|y| + κ|z| + σ‖u‖_λ` and continuity only.
    Growth,
}

/// Stochastic Lipschitz / linear-growth data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticLipschitzData {
    #[serde(default)]
    pub gamma: Process,
    #[serde(default)]
    pub kappa: Process,
    #[serde(default)]
    pub sigma: Process,
    #[serde(default)]
    pub rho: Process,
    #[serde(default)]
    pub zeta: Process,
    pub alpha: f64,
}

/// Per-node weight `a²` and its running integral `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeWeights {
    pub a2: Vec<f64>,
    pub big_a: Vec<f64>,
}

impl StochasticLipschitzData {
    pub fn constant(gamma: f64, kappa: f64, sigma: f64, rho: f64, alpha: f64) -> Self {
        Self { gamma: gamma.into(), kappa: kappa.into(), sigma: sigma.into(), rho: rho.into(), zeta: 0.0.into(), alpha }
    }

    pub fn with_zeta(mut self, zeta: impl Into<Process>) -> Self {
        self.zeta = zeta.into();
        self
    }

    /// `a² = γ + κ² + σ² + ϱ` at a step/node.
    pub fn a2(&self, step: usize, node: usize) -> f64 {
        let k = self.kappa.at(step, node);
        let s = self.sigma.at(step, node);
        self.gamma.at(step, node) + k * k + s * s + self.rho.at(step, node)
    }

    pub fn validate(&self, lattice: &ScenarioLattice, regime: Regime) -> Result<()> {
        for (name, p) in [
            ("gamma", &self.gamma),
            ("kappa", &self.kappa),
            ("sigma", &self.sigma),
            ("rho", &self.rho),
            ("zeta", &self.zeta),
        ] {
            p.check(name, lattice)?;
        }
        let upper = match regime {
            Regime::Lipschitz => 1.0,
            Regime::Growth => 0.5,
        };
        if !(self.alpha > 0.0 && self.alpha < upper) {
            return Err(Error::InvalidCoefficients(format!("alpha = {} must lie in (0, {upper})", self.alpha)));
        }
        for i in 0..lattice.n_steps() {
            for node in lattice.layer(i) {
                if !(self.a2(i, node) > 0.0) {
                    return Err(Error::ZeroWeight { step: i });
                }
            }
        }
        Ok(())
    }

    /// Step weights `a²_i` and `A_i = Σ_{j<i} a²_j Δt_j` (left-endpoint sums).
    pub fn a_process(&self, grid: &TimeGrid) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = grid.n_steps();
        let mut a2 = Vec::with_capacity(n);
        let mut big_a = Vec::with_capacity(n + 1);
        big_a.push(0.0);
        for i in 0..n {
            if [&self.gamma, &self.kappa, &self.sigma, &self.rho].iter().any(|p| matches!(p, Process::Nodes { .. })) {
                return Err(Error::Unsupported("a_process needs step-indexed data; use node_weights".into()));
            }
            let w = self.a2(i, 0);
            if !(w > 0.0) {
                return Err(Error::ZeroWeight { step: i });
            }
            a2.push(w);
            big_a.push(big_a[i] + w * grid.dt(i));
        }
        Ok((a2, big_a))
    }

    pub fn node_weights(&self, lattice: &ScenarioLattice) -> Result<NodeWeights> {
        let n = lattice.n_steps();
        let mut a2 = vec![0.0; lattice.n_nodes()];
        let mut big_a = vec![0.0; lattice.n_nodes()];
        for i in 0..=n {
            for node in lattice.layer(i) {
                let w = self.a2(i.min(n - 1), node);
                if i < n && !(w > 0.0) {
                    return Err(Error::ZeroWeight { step: i });
                }
                a2[node] = w;
            }
        }
        for i in 0..n {
            let dt = lattice.grid().dt(i);
            for node in lattice.layer(i) {
                let next = big_a[node] + a2[node] * dt;
                for (child, _) in lattice.children(node) {
                    big_a[child] = next;
                }
            }
        }
        Ok(NodeWeights { a2, big_a })
    }
}

/// `‖u‖_λ = (Σ_e |u(e)|² λ(e))^{1/2}`.
pub fn lambda_norm(u: &[f64], lambda: &[f64]) -> f64 {
    u.iter().zip(lambda).map(|(v, l)| v * v * l).sum::<f64>().sqrt()
}

fn euclid(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Where a driver is evaluated: the left endpoint `t_i` of step `i` at a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriverPoint {
    pub step: usize,
    pub node: usize,
    pub t: f64,
}

pub type ScalarDriver = Arc<dyn Fn(&DriverPoint, f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type VectorDriver = Arc<dyn Fn(&DriverPoint, f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Driver pair `(f, g)`; `g` takes values in `ℝ^ℓ`.
#[derive(Clone)]
pub struct DriverPair {
    f: ScalarDriver,
    g: VectorDriver,
    g_dim: usize,
    regime: Regime,
}

impl fmt::Debug for DriverPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverPair").field("g_dim", &self.g_dim).field("regime", &self.regime).finish_non_exhaustive()
    }
}

impl DriverPair {
    pub fn new<F, G>(f: F, g: G, g_dim: usize, regime: Regime) -> Self
    where
        F: Fn(&DriverPoint, f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&DriverPoint, f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { f: Arc::new(f), g: Arc::new(g), g_dim, regime }
    }

    /// `f` given, `g ≡ 0`.
    pub fn from_f<F>(f: F, g_dim: usize, regime: Regime) -> Self
    where
        F: Fn(&DriverPoint, f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(f, |_, _, _, _, out: &mut [f64]| out.fill(0.0), g_dim, regime)
    }

    pub fn zero(g_dim: usize) -> Self {
        Self::from_f(|_, _, _, _| 0.0, g_dim, Regime::Lipschitz)
    }

    /// `f = r·y + θ·z₁` with step-function `r`, `θ`.
    pub fn linear_pricing(r: Process, theta: Process, g_dim: usize) -> Self {
        Self::from_f(
            move |p, y, z, _| r.at(p.step, p.node) * y + theta.at(p.step, p.node) * z.first().copied().unwrap_or(0.0),
            g_dim,
            Regime::Lipschitz,
        )
    }

    pub fn with_g(mut self, g: VectorDriver) -> Self {
        self.g = g;
        self
    }

    pub fn g_dim(&self) -> usize {
        self.g_dim
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn f(&self, p: &DriverPoint, y: f64, z: &[f64], u: &[f64]) -> f64 {
        (self.f)(p, y, z, u)
    }

    pub fn g_into(&self, p: &DriverPoint, y: f64, z: &[f64], u: &[f64], out: &mut [f64]) {
        (self.g)(p, y, z, u, out)
    }

    /// The regularized driver `f_n` (same `g`), evaluated by grid inf-convolution.
    pub fn regularized(
        &self,
        n: usize,
        data: Arc<StochasticLipschitzData>,
        lambda: Vec<f64>,
        domain: Arc<SearchDomain>,
    ) -> Self {
        let base = self.clone();
        Self {
            f: Arc::new(move |p, y, z, u| {
                inf_convolution(&base, &data, n, p, y, z, u, &lambda, &domain).unwrap_or(f64::NAN)
            }),
            g: self.g.clone(),
            g_dim: self.g_dim,
            regime: Regime::Lipschitz,
        }
    }

    /// The growth envelope `F = ζ + γ|y| + κ|z| + σ‖u‖_λ` with this pair's `g`.
    pub fn envelope(&self, data: Arc<StochasticLipschitzData>, lambda: Vec<f64>) -> Self {
        Self {
            f: Arc::new(move |p, y, z, u| growth_bound(&data, &lambda, p, y, z, u)),
            g: self.g.clone(),
            g_dim: self.g_dim,
            regime: Regime::Lipschitz,
        }
    }
}

/// Evaluates `(f, g)`; non-finite output is an error carrying the location.
pub fn eval_drivers(pair: &DriverPair, p: &DriverPoint, y: f64, z: &[f64], u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let f = pair.f(p, y, z, u);
    let mut g = vec![0.0; pair.g_dim()];
    pair.g_into(p, y, z, u, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDriver { step: p.step, node: p.node, t: p.t });
    }
    Ok((f, g))
}

/// `F(t, y, z, u) = ζ_t + γ_t|y| + κ_t|z| + σ_t‖u‖_λ`.
pub fn growth_bound(
    data: &StochasticLipschitzData,
    lambda: &[f64],
    p: &DriverPoint,
    y: f64,
    z: &[f64],
    u: &[f64],
) -> f64 {
    let (s, n) = (p.step, p.node);
    data.zeta.at(s, n)
        + data.gamma.at(s, n) * y.abs()
        + data.kappa.at(s, n) * euclid(z)
        + data.sigma.at(s, n) * lambda_norm(u, lambda)
}

/// A point `(y, z, u)` at which drivers are probed.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub y: f64,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

fn penalty(data: &StochasticLipschitzData, lambda: &[f64], p: &DriverPoint, a: &Probe, b: &Probe) -> f64 {
    let dz: Vec<f64> = a.z.iter().zip(&b.z).map(|(x, y)| x - y).collect();
    let du: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
    data.gamma.at(p.step, p.node) * (a.y - b.y).abs()
        + data.kappa.at(p.step, p.node) * euclid(&dz)
        + data.sigma.at(p.step, p.node) * lambda_norm(&du, lambda)
}

/// Largest excess of the Lipschitz bounds for `f` and `g` over all probe pairs.
///
/// Returns `(f excess, g excess)`; both are `<= 0` when the bounds hold.
pub fn lipschitz_excess(
    pair: &DriverPair,
    data: &StochasticLipschitzData,
    lambda: &[f64],
    p: &DriverPoint,
    probes: &[Probe],
) -> (f64, f64) {
    let (s, n) = (p.step, p.node);
    let mut worst = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut ga = vec![0.0; pair.g_dim()];
    let mut gb = vec![0.0; pair.g_dim()];
    for (i, a) in probes.iter().enumerate() {
        for b in &probes[i + 1..] {
            let fa = pair.f(p, a.y, &a.z, &a.u);
            let fb = pair.f(p, b.y, &b.z, &b.u);
            worst.0 = worst.0.max((fa - fb).abs() - penalty(data, lambda, p, a, b));
            pair.g_into(p, a.y, &a.z, &a.u, &mut ga);
            pair.g_into(p, b.y, &b.z, &b.u, &mut gb);
            let dg2: f64 = ga.iter().zip(&gb).map(|(x, y)| (x - y).powi(2)).sum();
            let dz2: f64 = a.z.iter().zip(&b.z).map(|(x, y)| (x - y).powi(2)).sum();
            let du: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
            let bound = data.rho.at(s, n) * (a.y - b.y).powi(2) + data.alpha * (dz2 + lambda_norm(&du, lambda).powi(2));
            worst.1 = worst.1.max(dg2 - bound);
        }
    }
    worst
}

/// Largest excess of `|f| − F` over the probes (`<= 0` when the growth bound holds).
pub fn growth_excess(
    pair: &DriverPair,
    data: &StochasticLipschitzData,
    lambda: &[f64],
    p: &DriverPoint,
    probes: &[Probe],
) -> f64 {
    probes
        .iter()
        .map(|q| pair.f(p, q.y, &q.z, &q.u).abs() - growth_bound(data, lambda, p, q.y, &q.z, &q.u))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Uniform grid `lo, lo + h, …, hi` with `h = (hi − lo)/steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Self {
        Self { lo, hi, steps }
    }

    pub fn spacing(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            (self.hi - self.lo) / self.steps as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Vec::new();
        }
        if self.steps == 0 {
            return vec![self.lo];
        }
        (0..=self.steps).map(|k| if k == self.steps { self.hi } else { self.lo + k as f64 * self.spacing() }).collect()
    }
}

/// Finite candidate set for the inf-convolution.
///
/// Unspecified `z`/`u` axes are not searched: the candidate keeps the
/// probe's own coordinate there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchDomain {
    pub y: Axis,
    #[serde(default)]
    pub z: Option<Vec<Axis>>,
    #[serde(default)]
    pub u: Option<Vec<Axis>>,
}

impl SearchDomain {
    pub fn y_only(y: Axis) -> Self {
        Self { y, z: None, u: None }
    }

    /// Gap between the grid minimum and the exact infimum when the exact
    /// minimizer is interior and `f` is `n`-Lipschitz near it.
    pub fn resolution_bound(&self, n: usize, gamma: f64, kappa: f64, sigma: f64, lambda: &[f64]) -> f64 {
        let hz: Vec<f64> = self.z.iter().flatten().map(Axis::spacing).collect();
        let hu: Vec<f64> = self.u.iter().flatten().map(Axis::spacing).collect();
        n as f64 * (gamma * self.y.spacing() + kappa * euclid(&hz) + sigma * lambda_norm(&hu, lambda))
    }

    fn candidates(&self, z: &[f64], u: &[f64]) -> Result<Vec<Probe>> {
        let axis_sets = |axes: &Option<Vec<Axis>>, held: &[f64]| -> Result<Vec<Vec<f64>>> {
            match axes {
                None => Ok(held.iter().map(|v| vec![*v]).collect()),
                Some(a) if a.len() != held.len() => {
                    Err(Error::Dimension(format!("search domain has {} axes for a {}-vector", a.len(), held.len())))
                }
                Some(a) => Ok(a.iter().map(Axis::points).collect()),
            }
        };
        let ys = self.y.points();
        let zs = axis_sets(&self.z, z)?;
        let us = axis_sets(&self.u, u)?;
        if ys.is_empty() || zs.iter().chain(&us).any(Vec::is_empty) {
            return Err(Error::EmptySearchDomain);
        }
        let zc = cartesian(&zs);
        let uc = cartesian(&us);
        let mut out = Vec::with_capacity(ys.len() * zc.len() * uc.len());
        for &y in &ys {
            for zv in &zc {
                for uv in &uc {
                    out.push(Probe { y, z: zv.clone(), u: uv.clone() });
                }
            }
        }
        Ok(out)
    }
}

fn cartesian(sets: &[Vec<f64>]) -> Vec<Vec<f64>> {
    sets.iter().fold(vec![Vec::new()], |acc, set| {
        acc.iter()
            .flat_map(|prefix| {
                set.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

/// `f_n(p) = min_q [f(q) + n(γ|y−y′| + κ|z−z′| + σ‖u−u′‖_λ)]` over the
/// domain grid plus the point itself.
///
/// A grid minimum that undercuts `f(p)` only by rounding noise is not an
/// improvement: for `f` already `n`-Lipschitz the result is `f(p)` bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn inf_convolution(
    pair: &DriverPair,
    data: &StochasticLipschitzData,
    n: usize,
    p: &DriverPoint,
    y: f64,
    z: &[f64],
    u: &[f64],
    lambda: &[f64],
    domain: &SearchDomain,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidCoefficients("regularization index n must be >= 1".into()));
    }
    let candidates = domain.candidates(z, u)?;
    let here = Probe { y, z: z.to_vec(), u: u.to_vec() };
    let base = pair.f(p, y, z, u);
    let weight = n as f64;
    let best = candidates
        .iter()
        .map(|q| pair.f(p, q.y, &q.z, &q.u) + weight * penalty(data, lambda, p, &here, q))
        .fold(f64::INFINITY, f64::min);
    let noise = 64.0 * f64::EPSILON * base.abs();
    Ok(if best < base - noise { best } else { base })
}

/// Contraction constants `c̄ = 2/(ε + α)` and `β₀ = 1 + c̄ + 1/ε`.
pub fn beta_floor(epsilon: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidCoefficients(format!("epsilon = {epsilon} must be positive")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidCoefficients(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if epsilon + alpha >= 1.0 {
        return Err(Error::ContractionBound(epsilon + alpha));
    }
    let c_bar = 2.0 / (epsilon + alpha);
    Ok((c_bar, 1.0 + c_bar + 1.0 / epsilon))
}

/// Builtin `f` generators available from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FSpec {
    Zero,
    LinearPricing {
        r: Process,
        theta: Process,
    },
    /// `coeff·min(|y|, cap)²`.
    QuadraticY {
        #[serde(default = "unit")]
        coeff: f64,
        #[serde(default)]
        cap: Option<f64>,
    },
    AbsY {
        #[serde(default = "unit")]
        coeff: f64,
    },
    /// `Σ_k coeffs[k]·y^k`.
    CustomPolynomial {
        coeffs: Vec<f64>,
    },
    /// `c + a_y·y + Σ a_z[k] z_k + Σ a_u[e] u(e)`.
    Affine {
        #[serde(default)]
        c: f64,
        #[serde(default)]
        a_y: f64,
        #[serde(default)]
        a_z: Vec<f64>,
        #[serde(default)]
        a_u: Vec<f64>,
    },
}

/// Builtin `g` generators; each coordinate of `g` gets the same expression.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GSpec {
    #[default]
    Zero,
    /// `c + b_y·y + b_z·z₁`.
    Affine {
        #[serde(default)]
        c: f64,
        #[serde(default)]
        b_y: f64,
        #[serde(default)]
        b_z: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSpec {
    pub f: FSpec,
    #[serde(default)]
    pub g: GSpec,
    #[serde(default = "lipschitz")]
    pub regime: Regime,
}

fn lipschitz() -> Regime {
    Regime::Lipschitz
}

impl DriverSpec {
    pub fn build(&self, g_dim: usize) -> DriverPair {
        let f: ScalarDriver = match self.f.clone() {
            FSpec::Zero => Arc::new(|_, _, _, _| 0.0),
            FSpec::LinearPricing { r, theta } => Arc::new(move |p, y, z, _| {
                r.at(p.step, p.node) * y + theta.at(p.step, p.node) * z.first().copied().unwrap_or(0.0)
            }),
            FSpec::QuadraticY { coeff, cap } => Arc::new(move |_, y, _, _| {
                let m = cap.map_or(y.abs(), |c| y.abs().min(c));
                coeff * m * m
            }),
            FSpec::AbsY { coeff } => Arc::new(move |_, y, _, _| coeff * y.abs()),
            FSpec::CustomPolynomial { coeffs } => {
                Arc::new(move |_, y, _, _| coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c))
            }
            FSpec::Affine { c, a_y, a_z, a_u } => Arc::new(move |_, y, z, u| {
                c + a_y * y
                    + a_z.iter().zip(z).map(|(a, v)| a * v).sum::<f64>()
                    + a_u.iter().zip(u).map(|(a, v)| a * v).sum::<f64>()
            }),
        };
        let g: VectorDriver = match self.g {
            GSpec::Zero => Arc::new(|_, _, _, _, out: &mut [f64]| out.fill(0.0)),
            GSpec::Affine { c, b_y, b_z } => Arc::new(move |_, y, z, _, out: &mut [f64]| {
                out.fill(c + b_y * y + b_z * z.first().copied().unwrap_or(0.0))
            }),
        };
        DriverPair { f, g, g_dim, regime: self.regime }
    }
}
