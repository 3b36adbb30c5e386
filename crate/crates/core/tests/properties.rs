use proptest::prelude::*;
use rbdsde_core::coefficients::{inf_convolution, DriverPoint};
use rbdsde_core::norms::{weighted_norms, ThetaRef};
use rbdsde_core::solver::{
    mertens_split, minimal_solution_solve, picard_solve, solve_decoupled, validate_solution, DecoupledDrivers,
    DriverSource, InitialIterate, MinimalOptions, PicardOptions,
};
use rbdsde_core::{
    build_lattice, Axis, BPathSpec, Barrier, DriverPair, LatticeConfig, Mark, Regime, ScenarioLattice, SearchDomain,
    StochasticLipschitzData,
};

fn jump_lattice(n: usize) -> ScenarioLattice {
    let cfg = LatticeConfig::new(n, 1.0)
        .with_marks(vec![Mark { value: 1.0, intensity: 0.5 }])
        .with_b_paths(BPathSpec::Binary(Some(2)));
    build_lattice(&cfg).unwrap()
}

fn values(l: &ScenarioLattice) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0..3.0f64, l.n_nodes())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norms_grow_with_beta_and_scale_quadratically(
        y in values(&jump_lattice(2)),
        z in values(&jump_lattice(2)),
        u in values(&jump_lattice(2)),
        beta in 0.1..4.0f64,
        c in -3.0..3.0f64,
    ) {
        let l = jump_lattice(2);
        let w = StochasticLipschitzData::constant(0.5, 1.0, 0.0, 0.0, 0.5).node_weights(&l).unwrap();
        let t = ThetaRef { y: &y, y_plus: &y, z: &z, u: &u };
        let lo = weighted_norms(&l, &w, beta, &[t, t]).unwrap();
        let hi = weighted_norms(&l, &w, beta + 0.5, &[t, t]).unwrap();
        prop_assert!(lo.s2beta <= hi.s2beta && lo.m2a_beta <= hi.m2a_beta);
        prop_assert!(lo.m2beta_z <= hi.m2beta_z && lo.l2beta_u <= hi.l2beta_u);
        let scale = |v: &[f64]| v.iter().map(|x| c * x).collect::<Vec<_>>();
        let (cy, cz, cu) = (scale(&y), scale(&z), scale(&u));
        let ct = ThetaRef { y: &cy, y_plus: &cy, z: &cz, u: &cu };
        let scaled = weighted_norms(&l, &w, beta, &[ct, ct]).unwrap();
        let tol = 1e-12 * (1.0 + c * c * lo.bundle);
        prop_assert!((scaled.bundle - c * c * lo.bundle).abs() <= tol);
        prop_assert!((scaled.s2beta - c * c * lo.s2beta).abs() <= tol);
    }

    #[test]
    fn raising_barrier_or_driver_never_lowers_y(
        xi in values(&jump_lattice(2)),
        bump in proptest::collection::vec(0.0..1.0f64, jump_lattice(2).n_nodes()),
        f in values(&jump_lattice(2)),
    ) {
        let l = jump_lattice(2);
        let lo = Barrier::right_continuous(&l, xi.clone()).unwrap();
        let hi = Barrier::right_continuous(&l, xi.iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
        let base = DecoupledDrivers::from_fn(&l, |_, n| f[n], |_, n, g| g.fill(0.1 * f[n]));
        let raised = DecoupledDrivers::from_fn(&l, |_, n| f[n] + bump[n], |_, n, g| g.fill(0.1 * f[n]));
        let s = solve_decoupled(&l, &base, &lo, 1.0).unwrap();
        let sx = solve_decoupled(&l, &base, &hi, 1.0).unwrap();
        let sf = solve_decoupled(&l, &raised, &lo, 1.0).unwrap();
        for b in 0..2 {
            for n in 0..l.n_nodes() {
                prop_assert!(s.paths[b].y[n] <= sx.paths[b].y[n]);
                prop_assert!(s.paths[b].y[n] <= sf.paths[b].y[n] + 1e-14);
            }
        }
    }

    #[test]
    fn regularized_driver_is_monotone_and_lipschitz(p in -4.0..4.0f64, q in -4.0..4.0f64, n in 1usize..8) {
        let pair = DriverPair::from_f(|_, y, _, _| y.abs().min(5.0).powi(2), 1, Regime::Growth);
        let data = StochasticLipschitzData::constant(1.0, 0.0, 0.0, 0.0, 0.25).with_zeta(25.0);
        let domain = SearchDomain::y_only(Axis::new(-6.0, 6.0, 240));
        let at = DriverPoint { step: 0, node: 0, t: 0.0 };
        let f_n = |k: usize, y: f64| inf_convolution(&pair, &data, k, &at, y, &[0.0], &[], &[], &domain).unwrap();
        prop_assert!(f_n(n, p) <= f_n(n + 1, p));
        prop_assert!(f_n(n + 1, p) <= p.abs().min(5.0).powi(2));
        let slack = domain.resolution_bound(n, 1.0, 0.0, 0.0, &[]);
        prop_assert!((f_n(n, p) - f_n(n, q)).abs() <= n as f64 * (p - q).abs() + slack + 1e-12);
    }
}

fn jump_barrier(l: &ScenarioLattice) -> Barrier {
    let main: Vec<f64> = (0..l.n_nodes()).map(|n| ((n * 13 % 7) as f64) * 0.3).collect();
    let right: Vec<f64> =
        main.iter().enumerate().map(|(n, x)| if l.time_index(n) == 1 { x - 0.4 } else { *x }).collect();
    Barrier::new(l, main, right, &[1], &[2]).unwrap()
}

#[test]
fn mertens_split_recovers_reflection() {
    let l = jump_lattice(3);
    let barrier = jump_barrier(&l);
    let drv =
        DecoupledDrivers::from_fn(&l, |b, n| 0.2 - 0.1 * ((n + b) % 4) as f64, |_, n, g| g.fill(0.05 * (n % 3) as f64));
    let sol = solve_decoupled(&l, &drv, &barrier, 1.0).unwrap();
    for (b, p) in sol.paths.iter().enumerate() {
        // Ỹ = Y + Σ_{j<i} (f_jΔt + g_j·ΔB_j) is a supermartingale with the same K, C
        let mut acc = vec![0.0; l.n_nodes()];
        for i in 0..l.n_steps() {
            let db = l.b_increment(b, i)[0];
            for node in l.layer(i) {
                for (child, _) in l.children(node) {
                    acc[child] = acc[node] + drv.f[b][node] * l.grid().dt(i) + drv.g[b][node] * db;
                }
            }
        }
        let yt: Vec<f64> = p.y.iter().zip(&acc).map(|(y, a)| y + a).collect();
        let ytr: Vec<f64> = p.y_plus.iter().zip(&acc).map(|(y, a)| y + a).collect();
        let jumps: Vec<bool> = (0..=l.n_steps()).map(|i| barrier.is_right_jump_time(i)).collect();
        let m = mertens_split(&l, &yt, &ytr, barrier.predictable_flags(), &jumps).unwrap();
        for node in 0..l.n_nodes() {
            assert!((m.k[node] - p.k[node]).abs() < 1e-12);
            assert!((m.k_d[node] - p.k_d[node]).abs() < 1e-12);
            assert!((m.c[node] - p.c[node]).abs() < 1e-12);
            let c_before = m.c[node] - (yt[node] - ytr[node]);
            assert!((yt[node] - (m.n[node] - m.k[node] - c_before)).abs() < 1e-12);
        }
    }
    assert!(sol.paths.iter().any(|p| p.c.iter().any(|c| *c > 0.0)));
}

fn lipschitz_pair() -> DriverPair {
    DriverPair::new(
        |p, y, z, u| 0.4 * y.sin() + 0.3 * z[0] - 0.2 * u[0] + p.t,
        |_, y, _, _, out: &mut [f64]| out.fill(0.2 * y.cos()),
        1,
        Regime::Lipschitz,
    )
}

#[test]
fn picard_limit_does_not_depend_on_the_start() {
    let l = jump_lattice(3);
    let barrier = jump_barrier(&l);
    let data = StochasticLipschitzData::constant(0.4, 0.3, 0.4, 0.04, 0.25);
    let opts = PicardOptions { tolerance: 1e-24, ..PicardOptions::new(17.0 / 3.0, 0.5) };
    let (a, ta) = picard_solve(&l, &lipschitz_pair(), &barrier, &data, &opts).unwrap();
    let lifted = PicardOptions { initial: InitialIterate::BarrierLift, ..opts.clone() };
    let (b, tb) = picard_solve(&l, &lipschitz_pair(), &barrier, &data, &lifted).unwrap();
    assert!(ta.converged && tb.converged);
    let w = data.node_weights(&l).unwrap();
    assert!(a.bundle_distance(&b, &l, &w, opts.beta).unwrap() <= 10.0 * opts.tolerance);
    let report = validate_solution(&l, &a, &barrier, DriverSource::Pair(&lipschitz_pair()));
    assert!(report.passed, "{:?}", report.failures().collect::<Vec<_>>());
}

#[test]
fn picard_on_decoupled_driver_equals_direct_solve() {
    let l = jump_lattice(2);
    let barrier = jump_barrier(&l);
    let pair =
        DriverPair::new(|p, _, _, _| 1.0 - p.t, |p, _, _, _, out: &mut [f64]| out.fill(p.t), 1, Regime::Lipschitz);
    let data = StochasticLipschitzData::constant(0.1, 0.0, 0.0, 0.0, 0.25);
    let (sol, trace) = picard_solve(&l, &pair, &barrier, &data, &PicardOptions::new(17.0 / 3.0, 0.5)).unwrap();
    let drv = DecoupledDrivers::from_fn(
        &l,
        |_, n| 1.0 - l.grid().t(l.time_index(n)),
        |_, n, g| g.fill(l.grid().t(l.time_index(n))),
    );
    let direct = solve_decoupled(&l, &drv, &barrier, 17.0 / 3.0).unwrap();
    assert_eq!(trace.rows[1].bundle_diff, 0.0);
    for (p, q) in sol.paths.iter().zip(&direct.paths) {
        assert_eq!(p.y, q.y);
        assert_eq!(p.z, q.z);
        assert_eq!(p.u, q.u);
    }
}

fn minimal_options(n_max: usize) -> MinimalOptions {
    MinimalOptions {
        picard: PicardOptions { tolerance: 1e-26, max_iter: 500, ..PicardOptions::new(6.0, 0.5) },
        n_max,
        domain: SearchDomain::y_only(Axis::new(-6.0, 6.0, 240)),
        monotone_tol: 1e-10,
    }
}

#[test]
fn truncated_quadratic_snapshots_increase_below_the_envelope() {
    let l = build_lattice(&LatticeConfig::new(4, 0.2)).unwrap();
    let xi: Vec<f64> = (0..l.n_nodes()).map(|n| ((n * 5 % 9) as f64) / 9.0).collect();
    let barrier = Barrier::right_continuous(&l, xi).unwrap();
    let data = StochasticLipschitzData::constant(1.0, 0.0, 0.0, 0.0, 0.25).with_zeta(25.0);
    let pair = DriverPair::from_f(|_, y, _, _| y.abs().min(5.0).powi(2), 1, Regime::Growth);
    let out = minimal_solution_solve(&l, &pair, &barrier, &data, &minimal_options(12)).unwrap();
    for w in out.snapshots.windows(2) {
        for (lo, hi) in w[0][0].iter().zip(&w[1][0]) {
            assert!(lo <= &(hi + 1e-10));
        }
    }
    let last = &out.snapshots.last().unwrap()[0];
    let inner = 0..l.leaves().start;
    assert!(inner.map(|n| (last[n], out.envelope.paths[0].y[n])).all(|(y, e)| y < e));
    assert!(out.sup_gap >= -1e-10);
}

#[test]
fn lipschitz_driver_snapshots_freeze() {
    let l = build_lattice(&LatticeConfig::new(3, 0.3)).unwrap();
    let xi: Vec<f64> = (0..l.n_nodes()).map(|n| ((n * 3 % 5) as f64) / 5.0).collect();
    let barrier = Barrier::right_continuous(&l, xi).unwrap();
    // ζ covers the growth of 2.5|y| over the search domain; Lipschitz ratio 2.5 against γ = 1
    let data = StochasticLipschitzData::constant(1.0, 0.0, 0.0, 0.0, 0.25).with_zeta(10.0);
    let pair = DriverPair::from_f(|_, y, _, _| 2.5 * y.abs(), 1, Regime::Growth);
    let out = minimal_solution_solve(&l, &pair, &barrier, &data, &minimal_options(6)).unwrap();
    for s in &out.snapshots[3..] {
        assert_eq!(s, &out.snapshots[2]);
    }
    assert_ne!(out.snapshots[0], out.snapshots[2]);
}
