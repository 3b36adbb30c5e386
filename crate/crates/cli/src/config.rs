//! Run configuration read from a JSON file.
//!
//! Parsing reports the dotted path of the offending key; mode-specific
//! requirements are checked afterwards by [`RunConfig::require`].

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use rbdsde_core::barrier::BarrierShape;
use rbdsde_core::coefficients::{FSpec, GSpec};
use rbdsde_core::solver::InitialIterate;
use rbdsde_core::{BarrierSpec, DriverSpec, LatticeConfig, Process, SearchDomain, StochasticLipschitzData};

use crate::american::{AmericanClaimConfig, StockLattice};
use crate::error::{CliError, Result};
use crate::suite::{DEFAULT_SEED, MONOTONE_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    /// Drivers that ignore the solution, tabulated once.
    Decoupled,
    /// Lipschitz drivers solved by Picard iteration.
    Picard,
    /// Growth-regime drivers through the regularized sequence.
    Minimal,
    PriceAmerican,
    VerifySuite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimalConfig {
    pub n_max: usize,
    pub domain: SearchDomain,
    #[serde(default = "monotone_tol")]
    pub monotone_tol: f64,
}

fn monotone_tol() -> f64 {
    MONOTONE_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { seed: DEFAULT_SEED }
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overridden by the mode given on the command line.
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
    #[serde(default)]
    pub drivers: Option<DriverSpec>,
    #[serde(default)]
    pub barrier: Option<BarrierSpec>,
    #[serde(default)]
    pub data: Option<StochasticLipschitzData>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub initial: InitialIterate,
    #[serde(default)]
    pub minimal: Option<MinimalConfig>,
    #[serde(default)]
    pub american: Option<AmericanClaimConfig>,
    #[serde(default)]
    pub suite: SuiteConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_epsilon() -> f64 {
    0.5
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { "<root>".to_string() } else { key };
            CliError::config(key, e.inner().to_string())
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Checks that every key the mode needs is present and in range.
    pub fn require(&self, mode: Mode) -> Result<()> {
        let need = |present: bool, key: &str| {
            if present {
                Ok(())
            } else {
                Err(CliError::config(key, format!("required in {} mode", mode_name(mode))))
            }
        };
        match mode {
            Mode::Decoupled | Mode::Picard | Mode::Minimal => {
                need(self.lattice.is_some(), "lattice")?;
                need(self.drivers.is_some(), "drivers")?;
                need(self.barrier.is_some(), "barrier")?;
            }
            Mode::PriceAmerican => need(self.american.is_some(), "american")?,
            Mode::VerifySuite => {}
        }
        if matches!(mode, Mode::Picard | Mode::Minimal) {
            need(self.beta.is_some(), "beta")?;
            need(self.data.is_some(), "data")?;
        }
        if mode == Mode::Minimal {
            need(self.minimal.is_some(), "minimal")?;
        }
        if mode == Mode::Decoupled {
            if let Some(d) = &self.drivers {
                ignores_solution(d)?;
            }
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(CliError::config("beta", format!("{b} must be positive and finite")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CliError::config("epsilon", format!("{} must be positive and finite", self.epsilon)));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(CliError::config("tolerance", format!("{t} must be positive")));
            }
        }
        if self.max_iter == Some(0) {
            return Err(CliError::config("max_iter", "must be at least 1"));
        }
        if let Some(m) = &self.minimal {
            if m.n_max == 0 {
                return Err(CliError::config("minimal.n_max", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Splits every step into `k` equal substeps, repeating per-step values.
    pub fn refine(&mut self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(CliError::config("refine", "must be at least 1"));
        }
        if k == 1 {
            return Ok(());
        }
        if let Some(l) = &mut self.lattice {
            if l.knots.is_some() {
                return Err(CliError::config("lattice.knots", "explicit knots cannot be refined"));
            }
            l.n_steps *= k;
        }
        if let Some(d) = &mut self.data {
            for (name, p) in [
                ("gamma", &mut d.gamma),
                ("kappa", &mut d.kappa),
                ("sigma", &mut d.sigma),
                ("rho", &mut d.rho),
                ("zeta", &mut d.zeta),
            ] {
                refine_process(p, k, &format!("data.{name}"))?;
            }
        }
        if let Some(DriverSpec { f: FSpec::LinearPricing { r, theta }, .. }) = &mut self.drivers {
            refine_process(r, k, "drivers.f.r")?;
            refine_process(theta, k, "drivers.f.theta")?;
        }
        if let Some(b) = &mut self.barrier {
            if !matches!(b.shape, BarrierShape::Constant { .. }) {
                return Err(CliError::config("barrier.shape", "only constant barriers can be refined"));
            }
            b.predictable_times.iter_mut().for_each(|t| *t *= k);
        }
        if let Some(a) = &mut self.american {
            if matches!(a.stock, StockLattice::Factors { .. }) {
                return Err(CliError::config("american.stock", "fixed factors cannot be refined; give sigma"));
            }
            a.n_steps *= k;
            refine_process(&mut a.rate, k, "american.rate")?;
            if let Some(t) = &mut a.theta {
                refine_process(t, k, "american.theta")?;
            }
        }
        Ok(())
    }
}

fn refine_process(p: &mut Process, k: usize, key: &str) -> Result<()> {
    match p {
        Process::Scalar(_) => Ok(()),
        Process::Steps(v) => {
            *v = v.iter().flat_map(|x| std::iter::repeat_n(*x, k)).collect();
            Ok(())
        }
        Process::Nodes { .. } => Err(CliError::config(key, "node-indexed values cannot be refined")),
    }
}

fn mode_name(mode: Mode) -> String {
    mode.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string())
}

/// Decoupled mode tabulates the drivers once, so they must not read `(y, z, u)`.
fn ignores_solution(spec: &DriverSpec) -> Result<()> {
    let f_ok = match &spec.f {
        FSpec::Zero => true,
        FSpec::CustomPolynomial { coeffs } => coeffs.iter().skip(1).all(|c| *c == 0.0),
        FSpec::Affine { a_y, a_z, a_u, .. } => *a_y == 0.0 && a_z.iter().chain(a_u).all(|a| *a == 0.0),
        FSpec::LinearPricing { .. } | FSpec::QuadraticY { .. } | FSpec::AbsY { .. } => false,
    };
    if !f_ok {
        return Err(CliError::config("drivers.f", "decoupled mode needs an f that ignores (y, z, u); use picard"));
    }
    let g_ok = match spec.g {
        GSpec::Zero => true,
        GSpec::Affine { b_y, b_z, .. } => b_y == 0.0 && b_z == 0.0,
    };
    if !g_ok {
        return Err(CliError::config("drivers.g", "decoupled mode needs a g that ignores (y, z, u); use picard"));
    }
    Ok(())
}
