//! American put on a binomial stock lattice, priced as a linear reflected
//! equation with `f = −r·y + θ·z` and `g ≡ 0`.
//!
//! With `ΔW = ±√Δt` and `θ = (2q − 1)/√Δt` the one-step fixed point is
//! `V = max(ξ, (q·V_up + (1 − q)·V_down)/(1 + rΔt))`, the classical
//! backward induction under the risk-neutral probability `q`.

use serde::{Deserialize, Serialize};

use rbdsde_core::barrier::BarrierShape;
use rbdsde_core::lattice::ScenarioLattice;
use rbdsde_core::{
    beta_floor, build_barrier, build_lattice, picard_solve, Barrier, DriverPair, LatticeConfig, PicardOptions,
    PicardTrace, Process, Solution, StochasticLipschitzData, Topology,
};

use crate::error::{AtKey, CliError, Result};

const EPSILON: f64 = 0.5;
const ALPHA: f64 = 0.25;

/// Per-step price factors of the stock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StockLattice {
    Factors {
        up: f64,
        down: f64,
    },
    /// `up = e^{σ√Δt}`, `down = 1/up`.
    Volatility {
        sigma: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmericanClaimConfig {
    pub s0: f64,
    pub strike: f64,
    pub n_steps: usize,
    pub horizon: f64,
    /// Short rate per unit time, scalar or one value per step.
    pub rate: Process,
    /// Premium per step; derived from the risk-neutral probability when absent.
    #[serde(default)]
    pub theta: Option<Process>,
    pub stock: StockLattice,
    #[serde(default)]
    pub topology: Topology,
}

pub struct AmericanOutcome {
    pub price: f64,
    pub oracle: f64,
    pub lattice: ScenarioLattice,
    pub barrier: Barrier,
    pub pair: DriverPair,
    pub data: StochasticLipschitzData,
    pub solution: Solution,
    pub trace: PicardTrace,
}

impl AmericanClaimConfig {
    fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn factors(&self) -> (f64, f64) {
        match self.stock {
            StockLattice::Factors { up, down } => (up, down),
            StockLattice::Volatility { sigma } => {
                let up = (sigma * self.dt().sqrt()).exp();
                (up, 1.0 / up)
            }
        }
    }

    fn per_step(&self, p: &Process, key: &str) -> Result<Vec<f64>> {
        match p {
            Process::Scalar(v) => Ok(vec![*v; self.n_steps]),
            Process::Steps(v) if v.len() == self.n_steps => Ok(v.clone()),
            Process::Steps(v) => {
                Err(CliError::config(key, format!("{} step values for {} steps", v.len(), self.n_steps)))
            }
            Process::Nodes { .. } => Err(CliError::config(key, "node-indexed values are not supported here")),
        }
    }

    pub fn rates(&self) -> Result<Vec<f64>> {
        self.per_step(&self.rate, "american.rate")
    }

    /// Checks the inputs and the no-arbitrage band `down < 1 + rΔt < up`.
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(CliError::config("american.n_steps", "must be at least 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::config("american.horizon", "must be positive"));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(CliError::config("american.s0", "must be positive"));
        }
        if !(self.strike >= 0.0 && self.strike.is_finite()) {
            return Err(CliError::config("american.strike", "must be nonnegative"));
        }
        let (up, down) = self.factors();
        if !(down > 0.0 && up.is_finite()) {
            return Err(CliError::config("american.stock", "factors must be positive and finite"));
        }
        for (i, r) in self.rates()?.iter().enumerate() {
            let growth = 1.0 + r * self.dt();
            if !(up > growth && growth > down) {
                return Err(CliError::config(
                    "american.stock",
                    format!("arbitrage at step {i}: need up {up} > 1 + rΔt = {growth} > down {down}"),
                ));
            }
        }
        if let Some(theta) = &self.theta {
            let sqrt_dt = self.dt().sqrt();
            if self.per_step(theta, "american.theta")?.iter().any(|t| !(t.abs() * sqrt_dt < 1.0)) {
                return Err(CliError::config("american.theta", "needs |θ|√Δt < 1 for a probability in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Premium per step: the given `θ`, or `(2q − 1)/√Δt` with
    /// `q = (1 + rΔt − down)/(up − down)`.
    pub fn thetas(&self) -> Result<Vec<f64>> {
        if let Some(theta) = &self.theta {
            return self.per_step(theta, "american.theta");
        }
        let (up, down) = self.factors();
        let dt = self.dt();
        Ok(self.rates()?.iter().map(|r| (2.0 * (1.0 + r * dt - down) / (up - down) - 1.0) / dt.sqrt()).collect())
    }

    /// `γ = |r|`, `κ = |θ|`; `ϱ = 1` only on steps where both vanish.
    pub fn lipschitz_data(&self) -> Result<StochasticLipschitzData> {
        let gamma: Vec<f64> = self.rates()?.iter().map(|r| r.abs()).collect();
        let kappa: Vec<f64> = self.thetas()?.iter().map(|t| t.abs()).collect();
        let rho = gamma.iter().zip(&kappa).map(|(g, k)| if g + k * k > 0.0 { 0.0 } else { 1.0 }).collect();
        Ok(StochasticLipschitzData {
            gamma: Process::Steps(gamma),
            kappa: Process::Steps(kappa),
            sigma: Process::Scalar(0.0),
            rho: Process::Steps(rho),
            zeta: Process::Scalar(0.0),
            alpha: ALPHA,
        })
    }
}

/// Solves the pricing equation by Picard iteration and compares `V₀` with
/// [`binomial_oracle`]. `beta` defaults to the contraction floor.
pub fn price_american(config: &AmericanClaimConfig, beta: Option<f64>) -> Result<AmericanOutcome> {
    config.validate()?;
    let (up, down) = config.factors();
    let cfg = LatticeConfig::new(config.n_steps, config.horizon).with_topology(config.topology);
    let lattice = build_lattice(&cfg).at_key("american")?;
    let payoff = BarrierShape::PutPayoff { strike: config.strike, s0: config.s0, up, down };
    let barrier = build_barrier(&payoff.into(), &lattice).at_key("american")?;
    let neg_rates: Vec<f64> = config.rates()?.iter().map(|r| -r).collect();
    let pair = DriverPair::linear_pricing(Process::Steps(neg_rates), Process::Steps(config.thetas()?), lattice.b_dim());
    let data = config.lipschitz_data()?;
    let beta = match beta {
        Some(b) => b,
        None => beta_floor(EPSILON, ALPHA)?.1,
    };
    let options = PicardOptions { tolerance: 1e-28, max_iter: 500, ..PicardOptions::new(beta, EPSILON) };
    let (solution, trace) = picard_solve(&lattice, &pair, &barrier, &data, &options)?;
    let price = solution.y0(0);
    let oracle = binomial_oracle(config)?;
    Ok(AmericanOutcome { price, oracle, lattice, barrier, pair, data, solution, trace })
}

/// Classical backward induction over the number of up-moves `j`:
/// `V = max(K − S, (q·V_{j+1} + (1 − q)·V_j)/(1 + rΔt))`.
pub fn binomial_oracle(config: &AmericanClaimConfig) -> Result<f64> {
    config.validate()?;
    let n = config.n_steps;
    let dt = config.dt();
    let (up, down) = config.factors();
    let rates = config.rates()?;
    let probs: Vec<f64> = match &config.theta {
        Some(_) => config.thetas()?.iter().map(|t| (1.0 + t * dt.sqrt()) / 2.0).collect(),
        None => rates.iter().map(|r| (1.0 + r * dt - down) / (up - down)).collect(),
    };
    let payoff =
        |i: usize, j: usize| (config.strike - config.s0 * up.powi(j as i32) * down.powi((i - j) as i32)).max(0.0);
    let mut values: Vec<f64> = (0..=n).map(|j| payoff(n, j)).collect();
    for i in (0..n).rev() {
        let (q, disc) = (probs[i], 1.0 + rates[i] * dt);
        values = (0..=i).map(|j| payoff(i, j).max((q * values[j + 1] + (1.0 - q) * values[j]) / disc)).collect();
    }
    Ok(values[0])
}
