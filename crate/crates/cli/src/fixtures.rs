//! Seeded fixture families behind the verification suite.
//!
//! Every generator is a pure function of its seed, so reports built from
//! them are reproducible byte for byte.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbdsde_core::lattice::ScenarioLattice;
use rbdsde_core::solver::DecoupledDrivers;
use rbdsde_core::verify::DriverProbe;
use rbdsde_core::{
    build_lattice, BPathSpec, Barrier, DriverPair, LatticeConfig, Mark, Process, Regime, Result,
    StochasticLipschitzData,
};

/// Optimal-stopping instance with drivers free of the solution.
pub struct SnellCase {
    pub lattice: ScenarioLattice,
    pub barrier: Barrier,
    pub drivers: DecoupledDrivers,
}

/// Lipschitz instance for the Picard scheme.
pub struct PicardCase {
    pub lattice: ScenarioLattice,
    pub barrier: Barrier,
    pub pair: DriverPair,
    pub data: StochasticLipschitzData,
    /// The drivers ignore `(y, z, u)`; the scheme must stop after one step.
    pub decoupled: bool,
}

/// Drivers of an ordered comparison pair; `g` is shared.
pub enum OrderedDrivers {
    Decoupled([DecoupledDrivers; 2]),
    Pair([DriverPair; 2]),
}

/// Inputs with `ξ¹ ≤ ξ²` and `f¹ ≤ f²`.
pub struct ComparisonCase {
    pub lattice: ScenarioLattice,
    pub barriers: [Barrier; 2],
    pub drivers: OrderedDrivers,
    pub data: StochasticLipschitzData,
    pub probes: Vec<DriverProbe>,
}

/// Two decoupled inputs differing only in `f` on an `n`-step grid.
pub struct AprioriCase {
    pub lattice: ScenarioLattice,
    pub barrier: Barrier,
    pub drivers: [DecoupledDrivers; 2],
    pub data: StochasticLipschitzData,
    pub beta: f64,
}

/// Right-continuous barrier with both driver tables and a Lipschitz pair.
pub struct RightContinuousCase {
    pub name: String,
    pub lattice: ScenarioLattice,
    pub barrier: Barrier,
    pub drivers: DecoupledDrivers,
    pub pair: DriverPair,
    pub data: StochasticLipschitzData,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Running sum of the first W-coordinate, node-indexed.
pub fn w_level(lattice: &ScenarioLattice) -> Vec<f64> {
    let mut w = vec![0.0; lattice.n_nodes()];
    for i in 0..lattice.n_steps() {
        for node in lattice.layer(i) {
            for (child, branch) in lattice.children(node) {
                w[child] = w[node] + branch.dw[0];
            }
        }
    }
    w
}

/// Node values in `[lo, hi)` with right jumps of random size at `jump_times`.
fn random_barrier(
    rng: &mut ChaCha8Rng,
    lattice: &ScenarioLattice,
    lo: f64,
    hi: f64,
    jump_times: &[usize],
    predictable: &[usize],
) -> Result<Barrier> {
    let main: Vec<f64> = (0..lattice.n_nodes()).map(|_| rng.gen_range(lo..hi)).collect();
    let right = main
        .iter()
        .enumerate()
        .map(|(node, x)| if jump_times.contains(&lattice.time_index(node)) { x - rng.gen_range(0.0..1.0) } else { *x })
        .collect();
    Barrier::new(lattice, main, right, jump_times, predictable)
}

fn random_tables(rng: &mut ChaCha8Rng, lattice: &ScenarioLattice, scale: f64) -> DecoupledDrivers {
    let per_path =
        |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-scale..scale)).collect() };
    let f = (0..lattice.n_b_paths()).map(|_| per_path(rng, lattice.n_nodes())).collect();
    let g = (0..lattice.n_b_paths()).map(|_| per_path(rng, lattice.n_nodes() * lattice.b_dim())).collect();
    DecoupledDrivers { f, g }
}

/// `N ≤ 3`, binary W, at most one mark and at most two B-paths.
pub fn snell_cases(seed: u64, count: usize) -> Result<Vec<SnellCase>> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=3);
            let marks = if rng.gen_bool(0.5) {
                vec![Mark { value: 1.0, intensity: rng.gen_range(0.1..0.6) }]
            } else {
                Vec::new()
            };
            let b_paths = if rng.gen_bool(0.5) { BPathSpec::Binary(Some(2)) } else { BPathSpec::Zero };
            let cfg = LatticeConfig::new(n, rng.gen_range(0.5..2.0)).with_marks(marks).with_b_paths(b_paths);
            let lattice = build_lattice(&cfg)?;
            let jumps: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
            let barrier = random_barrier(&mut rng, &lattice, -1.0, 2.0, &jumps, &[])?;
            let drivers = random_tables(&mut rng, &lattice, 1.0);
            Ok(SnellCase { lattice, barrier, drivers })
        })
        .collect()
}

/// Random step-function Lipschitz data and drivers that respect it.
///
/// `f = γ sin(y + φ) + κ tanh(z₁) + σ Σ_e w_e √λ(e) sin(u(e))` with
/// `Σ w_e² ≤ 1`, and `g = √(ϱ/2) sin(y) + √(α/2) tanh(z₁)`, so the Lipschitz
/// bounds hold with the data's own coefficients.
fn lipschitz_pair(rng: &mut ChaCha8Rng, lattice: &ScenarioLattice, data: &StochasticLipschitzData) -> DriverPair {
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let drift = rng.gen_range(-1.0..1.0);
    let lambda = lattice.lambda();
    let m = lambda.len().max(1) as f64;
    let weights: Vec<f64> = lambda.iter().map(|l| l.sqrt() / m.sqrt()).collect();
    let (gamma, kappa, sigma, rho, alpha) =
        (data.gamma.clone(), data.kappa.clone(), data.sigma.clone(), data.rho.clone(), data.alpha);
    DriverPair::new(
        move |p, y, z, u| {
            let (i, n) = (p.step, p.node);
            let jump: f64 = weights.iter().zip(u).map(|(w, u)| w * u.sin()).sum();
            drift * p.t + gamma.at(i, n) * (y + phase).sin() + kappa.at(i, n) * z[0].tanh() + sigma.at(i, n) * jump
        },
        move |p, y, z, _, out: &mut [f64]| {
            let v = (rho.at(p.step, p.node) / 2.0).sqrt() * y.sin() + (alpha / 2.0).sqrt() * z[0].tanh();
            out.fill(v);
        },
        lattice.b_dim(),
        Regime::Lipschitz,
    )
}

fn steps(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Process {
    Process::Steps((0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Four-step instances with one mark, two B-paths and an irregular barrier.
///
/// The last `decoupled_count` cases carry drivers that ignore the solution.
pub fn picard_cases(seed: u64, count: usize, decoupled_count: usize) -> Result<Vec<PicardCase>> {
    const N: usize = 4;
    let mut rng = rng(seed);
    (0..count + decoupled_count)
        .map(|k| {
            let cfg = LatticeConfig::new(N, rng.gen_range(0.5..1.5))
                .with_marks(vec![Mark { value: 1.0, intensity: rng.gen_range(0.2..0.8) }])
                .with_b_paths(BPathSpec::Binary(Some(2)));
            let lattice = build_lattice(&cfg)?;
            let jump_time = rng.gen_range(0..N);
            let predictable_time = rng.gen_range(1..=N);
            let barrier = random_barrier(&mut rng, &lattice, -1.0, 1.0, &[jump_time], &[predictable_time])?;
            let data = StochasticLipschitzData {
                gamma: steps(&mut rng, N, 0.1, 1.5),
                kappa: steps(&mut rng, N, 0.1, 1.0),
                sigma: steps(&mut rng, N, 0.0, 1.0),
                rho: steps(&mut rng, N, 0.0, 0.5),
                zeta: Process::Scalar(0.0),
                alpha: 0.25,
            };
            let decoupled = k >= count;
            let pair = if decoupled {
                let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                DriverPair::new(
                    move |p, _, _, _| a + b * p.t,
                    move |p, _, _, _, out: &mut [f64]| out.fill(b * (1.0 - p.t)),
                    lattice.b_dim(),
                    Regime::Lipschitz,
                )
            } else {
                lipschitz_pair(&mut rng, &lattice, &data)
            };
            Ok(PicardCase { lattice, barrier, pair, data, decoupled })
        })
        .collect()
}

/// Ordered pairs: even cases use driver tables, odd cases Lipschitz drivers.
pub fn comparison_cases(seed: u64, count: usize) -> Result<Vec<ComparisonCase>> {
    let mut rng = rng(seed);
    (0..count)
        .map(|k| {
            let n = rng.gen_range(1..=3);
            let marks = if rng.gen_bool(0.5) {
                vec![Mark { value: 1.0, intensity: rng.gen_range(0.1..0.6) }]
            } else {
                Vec::new()
            };
            let b_paths = if rng.gen_bool(0.5) { BPathSpec::Binary(Some(2)) } else { BPathSpec::Zero };
            let lattice =
                build_lattice(&LatticeConfig::new(n, rng.gen_range(0.5..1.5)).with_marks(marks).with_b_paths(b_paths))?;
            let jumps: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
            let low = random_barrier(&mut rng, &lattice, -1.0, 1.0, &jumps, &[])?;
            let shift: Vec<f64> = (0..lattice.n_nodes()).map(|_| rng.gen_range(0.0..0.5)).collect();
            let lift = |v: &[f64]| -> Vec<f64> { v.iter().zip(&shift).map(|(a, s)| a + s).collect() };
            let high = Barrier::new(&lattice, lift(low.values()), lift(low.right_values()), &jumps, &[])?;
            let data = StochasticLipschitzData::constant(0.5, 0.5, 0.5, 0.2, 0.25);
            let drivers = if k % 2 == 0 {
                let lower = random_tables(&mut rng, &lattice, 1.0);
                let mut upper = lower.clone();
                for f in upper.f.iter_mut().flatten() {
                    *f += rng.gen_range(0.0..0.5);
                }
                OrderedDrivers::Decoupled([lower, upper])
            } else {
                let lower = lipschitz_pair(&mut rng, &lattice, &data);
                let gap = rng.gen_range(0.0..0.5);
                let base = lower.clone();
                let upper = DriverPair::new(
                    move |p, y, z, u| base.f(p, y, z, u) + gap * (1.0 + p.t),
                    {
                        let base = lower.clone();
                        move |p, y, z, u, out: &mut [f64]| base.g_into(p, y, z, u, out)
                    },
                    lattice.b_dim(),
                    Regime::Lipschitz,
                );
                OrderedDrivers::Pair([lower, upper])
            };
            let probes = (0..4)
                .map(|_| DriverProbe {
                    y: rng.gen_range(-3.0..3.0),
                    z: vec![rng.gen_range(-3.0..3.0); lattice.w_dim()],
                    u: vec![rng.gen_range(-3.0..3.0); lattice.n_marks()],
                })
                .collect();
            Ok(ComparisonCase { lattice, barriers: [low, high], drivers, data, probes })
        })
        .collect()
}

/// `a² = 4`, `β = 2`, `ξ` shared, `f̄ = |1 + W|` on an `n`-step unit grid.
pub fn apriori_case(n: usize) -> Result<AprioriCase> {
    let lattice = build_lattice(&LatticeConfig::new(n, 1.0))?;
    let w = w_level(&lattice);
    let barrier = Barrier::right_continuous(&lattice, w.iter().map(|w| 0.5 * w.max(0.0)).collect())?;
    let base = DecoupledDrivers::from_fn(&lattice, |_, node| 0.3 * w[node], |_, _, g| g.fill(0.0));
    let bumped =
        DecoupledDrivers::from_fn(&lattice, |_, node| 0.3 * w[node] + (1.0 + w[node]).abs(), |_, _, g| g.fill(0.0));
    let data = StochasticLipschitzData::constant(4.0, 0.0, 0.0, 0.0, 0.25);
    Ok(AprioriCase { lattice, barrier, drivers: [base, bumped], data, beta: 2.0 })
}

/// Right-continuous barriers over several lattice shapes.
pub fn right_continuous_cases(seed: u64) -> Result<Vec<RightContinuousCase>> {
    let mut rng = rng(seed);
    let shapes: [(&str, LatticeConfig); 4] = [
        ("binary", LatticeConfig::new(3, 1.0)),
        ("jumps", LatticeConfig::new(3, 1.0).with_marks(vec![Mark { value: 1.0, intensity: 0.4 }])),
        ("backward_noise", LatticeConfig::new(3, 1.0).with_b_paths(BPathSpec::Binary(Some(4)))),
        ("two_factor", LatticeConfig::new(2, 0.5).with_w_dim(2)),
    ];
    let mut out = Vec::new();
    for (name, cfg) in shapes {
        let lattice = build_lattice(&cfg)?;
        let n = lattice.n_steps();
        let predictable: Vec<usize> = (1..=n).filter(|_| rng.gen_bool(0.5)).collect();
        let barrier = random_barrier(&mut rng, &lattice, -1.0, 1.0, &[], &predictable)?;
        let drivers = random_tables(&mut rng, &lattice, 1.0);
        let data = StochasticLipschitzData::constant(0.5, 0.5, 0.5, 0.2, 0.25);
        let pair = lipschitz_pair(&mut rng, &lattice, &data);
        out.push(RightContinuousCase { name: name.to_string(), lattice, barrier, drivers, pair, data });
    }
    Ok(out)
}
