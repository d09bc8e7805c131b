use serde::{Deserialize, Serialize};

use super::RandomSource;
use crate::analytic::normal_quantile;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

/// One risky asset with normal returns against a risk-free rate, CARA investor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PortfolioRaw")]
pub struct PortfolioProblem {
    pub risk_free: f64,
    pub return_mean: f64,
    pub return_sd: f64,
    pub risk_aversion: f64,
    pub weight_domain: (f64, f64),
}

#[derive(Deserialize)]
struct PortfolioRaw {
    risk_free: f64,
    return_mean: f64,
    return_sd: f64,
    risk_aversion: f64,
    weight_domain: (f64, f64),
}

impl TryFrom<PortfolioRaw> for PortfolioProblem {
    type Error = Error;

    fn try_from(r: PortfolioRaw) -> Result<Self> {
        Self::new(r.risk_free, r.return_mean, r.return_sd, r.risk_aversion, r.weight_domain)
    }
}

impl PortfolioProblem {
    pub fn new(
        risk_free: f64,
        return_mean: f64,
        return_sd: f64,
        risk_aversion: f64,
        weight_domain: (f64, f64),
    ) -> Result<Self> {
        if !(return_sd > 0.0) {
            return Err(Error::arg(format!("return sd must be positive, got {return_sd}")));
        }
        if !(risk_aversion > 0.0) {
            return Err(Error::arg(format!("risk aversion must be positive, got {risk_aversion}")));
        }
        let (lo, hi) = weight_domain;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::arg(format!(
                "weight domain must be a nonempty interval inside [0,1], got {weight_domain:?}"
            )));
        }
        if !risk_free.is_finite() || !return_mean.is_finite() {
            return Err(Error::arg("returns must be finite"));
        }
        Ok(Self {
            risk_free,
            return_mean,
            return_sd,
            risk_aversion,
            weight_domain,
        })
    }

    pub fn check_weight(&self, omega: f64) -> Result<()> {
        let (lo, hi) = self.weight_domain;
        if omega >= lo && omega <= hi {
            Ok(())
        } else {
            Err(Error::domain(format!("weight {omega} outside [{lo}, {hi}]")))
        }
    }

    /// `n` equally spaced weights covering the domain, endpoints included.
    pub fn weight_grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self.weight_domain;
        if n <= 1 {
            return vec![lo];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// `U(W) = -exp(-gamma W)`.
pub fn cara_utility(wealth: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::domain(format!("risk aversion must be positive, got {gamma}")));
    }
    let u = -(-gamma * wealth).exp();
    if !u.is_finite() {
        return Err(Error::numeric(format!("CARA utility overflowed at W={wealth}")));
    }
    Ok(u)
}

/// `W = (1 - omega) r_f + omega R`.
pub fn portfolio_wealth(omega: f64, ret: f64, risk_free: f64) -> f64 {
    (1.0 - omega) * risk_free + omega * ret
}

/// One simulated `(omega, Z)` row with the draws behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioDraw {
    pub omega: f64,
    /// The uniform behind the return, `R = mu + sigma Phi^{-1}(uniform)`.
    pub uniform: f64,
    pub ret: f64,
    pub wealth: f64,
    pub utility: f64,
}

pub fn simulate_portfolio_table(
    p: &PortfolioProblem,
    grid: &[f64],
    draws_per_weight: usize,
    rng: &RandomSource,
) -> Result<Vec<PortfolioDraw>> {
    simulate_portfolio_table_with(p, grid, draws_per_weight, rng, ExecMode::default())
}

/// For each grid weight, draws `R ~ N(mu, sigma^2)` and records `Z = U(W)`.
/// Weight `j` uses substream `j`, so rows for a weight are independent of the
/// rest of the grid.
pub fn simulate_portfolio_table_with(
    p: &PortfolioProblem,
    grid: &[f64],
    draws_per_weight: usize,
    rng: &RandomSource,
    mode: ExecMode,
) -> Result<Vec<PortfolioDraw>> {
    if grid.is_empty() {
        return Err(Error::arg("empty weight grid"));
    }
    if draws_per_weight == 0 {
        return Err(Error::arg("draws per weight must be at least 1"));
    }
    for &w in grid {
        p.check_weight(w)?;
    }
    let blocks = exec::map_indexed(mode, grid.len(), |j| {
        let omega = grid[j];
        let mut r = rng.substream(j as u64);
        (0..draws_per_weight)
            .map(|k| {
                let uniform = r.uniform();
                let ret = p.return_mean + p.return_sd * normal_quantile(uniform)?;
                let wealth = portfolio_wealth(omega, ret, p.risk_free);
                let utility = cara_utility(wealth, p.risk_aversion).map_err(|e| Error::Simulation {
                    index: j * draws_per_weight + k,
                    reason: e.to_string(),
                })?;
                Ok(PortfolioDraw {
                    omega,
                    uniform,
                    ret,
                    wealth,
                    utility,
                })
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut rows = Vec::with_capacity(grid.len() * draws_per_weight);
    for b in blocks {
        rows.extend(b?);
    }
    Ok(rows)
}
