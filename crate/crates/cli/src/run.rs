//! Mode pipelines behind the `rbdsde` binary.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;

use rbdsde_core::lattice::ScenarioLattice;
use rbdsde_core::solver::{DriverSource, MinimalOptions};
use rbdsde_core::verify::check_contraction;
use rbdsde_core::{
    beta_floor, build_barrier, build_lattice, minimal_solution_solve, picard_solve, solve_decoupled, validate_solution,
    Barrier, CheckReport, DecoupledDrivers, DriverPair, DriverPoint, NormReport, PicardOptions, Regime, Solution,
    StochasticLipschitzData,
};

use crate::american::price_american;
use crate::config::{Mode, RunConfig};
use crate::error::{AtKey, CliError, Result};
use crate::output;
use crate::suite::{verify_suite, PRICE_TOL};

/// Command-line values that beat the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub beta: Option<f64>,
    pub refine: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub mode: Mode,
    pub reports: Vec<CheckReport>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }

    /// 0 when every check passed, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        u8::from(!self.passed())
    }
}

/// Default output directory when neither the file nor `--out` names one.
pub const DEFAULT_OUT: &str = "rbdsde-out";

/// Applies the overrides, checks the mode's keys, runs it and writes the
/// report files.
pub fn run_experiment(mut config: RunConfig, overrides: &Overrides) -> Result<RunOutcome> {
    let mode = overrides.mode.or(config.mode).ok_or_else(|| CliError::config("mode", "no mode given"))?;
    if let Some(b) = overrides.beta {
        config.beta = Some(b);
    }
    if let Some(k) = overrides.refine {
        config.refine(k)?;
    }
    config.require(mode)?;
    let dir = overrides.out.clone().or_else(|| config.output.dir.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
    output::ensure_dir(&dir)?;
    log::info!("running {mode:?} into {}", dir.display());

    let mut files = Vec::new();
    let reports = match mode {
        Mode::VerifySuite => verify_suite(config.suite.seed)?,
        Mode::PriceAmerican => {
            let american = config.american.as_ref().expect("checked by require");
            let out = price_american(american, config.beta)?;
            let mut reports = vec![CheckReport::new("american_oracle", (out.price - out.oracle).abs(), PRICE_TOL)
                .with_metric("price", out.price)
                .with_metric("oracle", out.oracle)
                .with_metric("iterations", out.trace.iterations() as f64)];
            reports.extend(
                validate_solution(&out.lattice, &out.solution, &out.barrier, DriverSource::Pair(&out.pair)).checks,
            );
            files.push(output::write_trace(&dir, &out.trace)?);
            let norms = norms(&out.lattice, &out.solution, &out.data, out.trace.beta)?;
            files.extend(write_solution_files(&dir, &out.lattice, &out.solution, &out.barrier, Some(&norms))?);
            reports
        }
        Mode::Decoupled | Mode::Picard | Mode::Minimal => {
            let lattice = build_lattice(config.lattice.as_ref().expect("checked by require")).at_key("lattice")?;
            let barrier =
                build_barrier(config.barrier.as_ref().expect("checked by require"), &lattice).at_key("barrier")?;
            let pair = config.drivers.as_ref().expect("checked by require").build(lattice.b_dim());
            match mode {
                Mode::Decoupled => run_decoupled(&config, &lattice, &barrier, &pair, &dir, &mut files)?,
                Mode::Picard => run_picard(&config, &lattice, &barrier, &pair, &dir, &mut files)?,
                _ => run_minimal(&config, &lattice, &barrier, &pair, &dir, &mut files)?,
            }
        }
    };
    files.push(output::write_reports(&dir, &reports)?);
    Ok(RunOutcome { mode, reports, files })
}

fn norms(
    lattice: &ScenarioLattice,
    solution: &Solution,
    data: &StochasticLipschitzData,
    beta: f64,
) -> Result<NormReport> {
    let weights = data.node_weights(lattice).at_key("data")?;
    Ok(solution.norms(lattice, &weights, beta)?)
}

fn write_solution_files(
    dir: &std::path::Path,
    lattice: &ScenarioLattice,
    solution: &Solution,
    barrier: &Barrier,
    norms: Option<&NormReport>,
) -> Result<Vec<PathBuf>> {
    let mut files = vec![output::write_solution(dir, lattice, solution, barrier)?];
    if let Some(n) = norms {
        files.push(output::write_json(dir, output::NORMS_FILE, n)?);
    }
    Ok(files)
}

/// Driver values at `(y, z, u) = 0` on every node.
fn tabulate(lattice: &ScenarioLattice, pair: &DriverPair) -> DecoupledDrivers {
    let (z, u) = (vec![0.0; lattice.w_dim()], vec![0.0; lattice.n_marks()]);
    let point = |node: usize| {
        let step = lattice.time_index(node);
        DriverPoint { step, node, t: lattice.grid().t(step) }
    };
    DecoupledDrivers::from_fn(
        lattice,
        |_, node| pair.f(&point(node), 0.0, &z, &u),
        |_, node, out| pair.g_into(&point(node), 0.0, &z, &u, out),
    )
}

fn checked_data(config: &RunConfig, lattice: &ScenarioLattice, regime: Regime) -> Result<StochasticLipschitzData> {
    let data = config.data.clone().expect("checked by require");
    data.validate(lattice, regime).at_key("data")?;
    Ok(data)
}

fn require_regime(pair: &DriverPair, regime: Regime, mode: &str) -> Result<()> {
    if pair.regime() == regime {
        Ok(())
    } else {
        Err(CliError::config("drivers.regime", format!("{mode} mode needs the {regime:?} regime")))
    }
}

fn picard_options(config: &RunConfig) -> PicardOptions {
    let defaults = PicardOptions::new(config.beta.expect("checked by require"), config.epsilon);
    PicardOptions {
        tolerance: config.tolerance.unwrap_or(defaults.tolerance),
        max_iter: config.max_iter.unwrap_or(defaults.max_iter),
        initial: config.initial,
        ..defaults
    }
}

fn run_decoupled(
    config: &RunConfig,
    lattice: &ScenarioLattice,
    barrier: &Barrier,
    pair: &DriverPair,
    dir: &std::path::Path,
    files: &mut Vec<PathBuf>,
) -> Result<Vec<CheckReport>> {
    let tables = tabulate(lattice, pair);
    let beta = config.beta.unwrap_or(1.0);
    let solution = solve_decoupled(lattice, &tables, barrier, beta)?;
    let norms = match &config.data {
        Some(data) => Some(norms(lattice, &solution, data, beta)?),
        None => None,
    };
    files.extend(write_solution_files(dir, lattice, &solution, barrier, norms.as_ref())?);
    Ok(validate_solution(lattice, &solution, barrier, DriverSource::Decoupled(&tables)).checks)
}

fn run_picard(
    config: &RunConfig,
    lattice: &ScenarioLattice,
    barrier: &Barrier,
    pair: &DriverPair,
    dir: &std::path::Path,
    files: &mut Vec<PathBuf>,
) -> Result<Vec<CheckReport>> {
    require_regime(pair, Regime::Lipschitz, "picard")?;
    let data = checked_data(config, lattice, Regime::Lipschitz)?;
    let options = picard_options(config);
    let (_, floor) = beta_floor(options.epsilon, data.alpha).at_key("epsilon")?;
    let (solution, trace) = picard_solve(lattice, pair, barrier, &data, &options)?;
    files.push(output::write_trace(dir, &trace)?);
    let norms = norms(lattice, &solution, &data, options.beta)?;
    files.extend(write_solution_files(dir, lattice, &solution, barrier, Some(&norms))?);

    let converged = if trace.converged { 0.0 } else { trace.last_diff().unwrap_or(f64::INFINITY) };
    let mut reports = vec![CheckReport::new("picard_converged", converged, 0.0)
        .with_param("tolerance", options.tolerance)
        .with_metric("iterations", trace.iterations() as f64)
        .with_metric("last_diff", trace.last_diff().unwrap_or(f64::NAN))];
    // the contraction rate is only promised above the floor
    if options.beta >= floor {
        match check_contraction(&trace, options.epsilon, data.alpha) {
            Ok(r) => reports.push(r),
            Err(e) => log::info!("contraction check skipped: {e}"),
        }
    }
    reports.extend(validate_solution(lattice, &solution, barrier, DriverSource::Pair(pair)).checks);
    Ok(reports)
}

fn run_minimal(
    config: &RunConfig,
    lattice: &ScenarioLattice,
    barrier: &Barrier,
    pair: &DriverPair,
    dir: &std::path::Path,
    files: &mut Vec<PathBuf>,
) -> Result<Vec<CheckReport>> {
    require_regime(pair, Regime::Growth, "minimal")?;
    let data = checked_data(config, lattice, Regime::Growth)?;
    let m = config.minimal.as_ref().expect("checked by require");
    let options = MinimalOptions {
        picard: picard_options(config),
        n_max: m.n_max,
        domain: m.domain.clone(),
        monotone_tol: m.monotone_tol,
    };
    let outcome = minimal_solution_solve(lattice, pair, barrier, &data, &options)?;
    if let Some(trace) = outcome.traces.get(m.n_max - 1) {
        files.push(output::write_trace(dir, trace)?);
    }
    let norms = norms(lattice, &outcome.solution, &data, options.picard.beta)?;
    files.extend(write_solution_files(dir, lattice, &outcome.solution, barrier, Some(&norms))?);

    let above = outcome
        .solution
        .paths
        .iter()
        .zip(&outcome.envelope.paths)
        .flat_map(|(p, e)| p.y.iter().zip(&e.y).map(|(y, e)| y - e))
        .fold(0.0, f64::max);
    let mut reports = vec![CheckReport::new("minimal_envelope_bound", above, m.monotone_tol)
        .with_param("n_max", m.n_max as f64)
        .with_metric("sup_gap", outcome.sup_gap)];
    let f_n = pair.regularized(m.n_max, Arc::new(data), lattice.lambda(), Arc::new(m.domain.clone()));
    reports.extend(validate_solution(lattice, &outcome.solution, barrier, DriverSource::Pair(&f_n)).checks);
    Ok(reports)
}
