//! Simulators: priors, forward maps, summary statistics and utilities.

mod portfolio;
mod rng;
mod summary;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

pub use portfolio::{
    cara_utility, portfolio_wealth, simulate_portfolio_table, simulate_portfolio_table_with,
    PortfolioDraw, PortfolioProblem,
};
pub use rng::{RandomSource, RandomSourceInfo, RNG_ALGORITHM};
pub use summary::{learn_summary_ols, summary_mean, LinearSummary};

/// Rows simulated per random stream. Chunking is fixed so results do not
/// depend on the execution mode.
pub const SIMULATION_CHUNK: usize = 1024;

/// A generative model: prior, forward simulator and summary statistic.
pub trait Model: Send + Sync {
    fn sample_prior(&self, rng: &mut RandomSource) -> f64;

    /// Simulates `n_obs()` observations given the parameter.
    fn forward(&self, theta: f64, rng: &mut RandomSource) -> Vec<f64>;

    fn summary(&self, y: &[f64]) -> Vec<f64>;

    fn n_obs(&self) -> usize;

    /// Length of every vector returned by `summary`.
    fn summary_dim(&self) -> usize;

    fn id(&self) -> String {
        "custom".to_string()
    }
}

type PriorFn = Arc<dyn Fn(&mut RandomSource) -> f64 + Send + Sync>;
type ForwardFn = Arc<dyn Fn(f64, usize, &mut RandomSource) -> Vec<f64> + Send + Sync>;
type SummaryFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A user-defined model assembled from closures. The forward closure may
/// sample from a likelihood or apply a deterministic map `y = f(theta)`.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    prior: PriorFn,
    forward: ForwardFn,
    summary: SummaryFn,
    n_obs: usize,
    summary_dim: usize,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("n_obs", &self.n_obs)
            .field("summary_dim", &self.summary_dim)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn new<P, F, S>(
        name: impl Into<String>,
        prior: P,
        forward: F,
        summary: S,
        n_obs: usize,
    ) -> Result<Self>
    where
        P: Fn(&mut RandomSource) -> f64 + Send + Sync + 'static,
        F: Fn(f64, usize, &mut RandomSource) -> Vec<f64> + Send + Sync + 'static,
        S: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if n_obs == 0 {
            return Err(Error::arg("n_obs must be positive"));
        }
        // probe the summary once to pin its dimension
        let summary_dim = summary(&vec![0.0; n_obs]).len();
        Ok(Self {
            name: name.into(),
            prior: Arc::new(prior),
            forward: Arc::new(forward),
            summary: Arc::new(summary),
            n_obs,
            summary_dim,
        })
    }
}

impl Model for ModelSpec {
    fn sample_prior(&self, rng: &mut RandomSource) -> f64 {
        (self.prior)(rng)
    }

    fn forward(&self, theta: f64, rng: &mut RandomSource) -> Vec<f64> {
        (self.forward)(theta, self.n_obs, rng)
    }

    fn summary(&self, y: &[f64]) -> Vec<f64> {
        (self.summary)(y)
    }

    fn n_obs(&self) -> usize {
        self.n_obs
    }

    fn summary_dim(&self) -> usize {
        self.summary_dim
    }

    fn id(&self) -> String {
        self.name.clone()
    }
}

/// `theta ~ N(mu, alpha^2)`, `y_i | theta ~ N(theta, sigma^2)`, `i = 1..n`.
///
/// Parameters are stored as variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormalNormalRaw")]
pub struct NormalNormalModel {
    prior_mean: f64,
    prior_variance: f64,
    likelihood_variance: f64,
    n: usize,
}

#[derive(Deserialize)]
struct NormalNormalRaw {
    prior_mean: f64,
    prior_variance: f64,
    likelihood_variance: f64,
    n: usize,
}

impl TryFrom<NormalNormalRaw> for NormalNormalModel {
    type Error = Error;

    fn try_from(r: NormalNormalRaw) -> Result<Self> {
        Self::new(r.prior_mean, r.prior_variance, r.likelihood_variance, r.n)
    }
}

impl NormalNormalModel {
    pub fn new(prior_mean: f64, prior_variance: f64, likelihood_variance: f64, n: usize) -> Result<Self> {
        if !(prior_variance > 0.0 && prior_variance.is_finite()) {
            return Err(Error::arg(format!("prior variance must be positive, got {prior_variance}")));
        }
        if !(likelihood_variance > 0.0 && likelihood_variance.is_finite()) {
            return Err(Error::arg(format!(
                "likelihood variance must be positive, got {likelihood_variance}"
            )));
        }
        if !prior_mean.is_finite() {
            return Err(Error::arg("prior mean must be finite"));
        }
        Ok(Self {
            prior_mean,
            prior_variance,
            likelihood_variance,
            n,
        })
    }

    /// Construction from standard deviations.
    pub fn from_sds(prior_mean: f64, prior_sd: f64, likelihood_sd: f64, n: usize) -> Result<Self> {
        Self::new(prior_mean, prior_sd * prior_sd, likelihood_sd * likelihood_sd, n)
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn likelihood_variance(&self) -> f64 {
        self.likelihood_variance
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Observations drawn around a fixed parameter value.
    pub fn observe(&self, theta: f64, rng: &mut RandomSource) -> Vec<f64> {
        let sd = self.likelihood_variance.sqrt();
        (0..self.n).map(|_| rng.normal(theta, sd)).collect()
    }
}

impl Model for NormalNormalModel {
    fn sample_prior(&self, rng: &mut RandomSource) -> f64 {
        rng.normal(self.prior_mean, self.prior_variance.sqrt())
    }

    fn forward(&self, theta: f64, rng: &mut RandomSource) -> Vec<f64> {
        self.observe(theta, rng)
    }

    fn summary(&self, y: &[f64]) -> Vec<f64> {
        vec![summary_mean(y).unwrap_or(f64::NAN)]
    }

    fn n_obs(&self) -> usize {
        self.n
    }

    fn summary_dim(&self) -> usize {
        1
    }

    fn id(&self) -> String {
        "normal-normal".to_string()
    }
}

/// A utility `U(d, theta)` over a one-dimensional decision interval.
#[derive(Clone)]
pub struct UtilitySpec {
    name: String,
    evaluate: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    domain: (f64, f64),
}

impl fmt::Debug for UtilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UtilitySpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl UtilitySpec {
    pub fn new<U>(name: impl Into<String>, domain: (f64, f64), evaluate: U) -> Result<Self>
    where
        U: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(domain.0 <= domain.1) {
            return Err(Error::arg(format!("empty decision domain {domain:?}")));
        }
        Ok(Self {
            name: name.into(),
            evaluate: Arc::new(evaluate),
            domain,
        })
    }

    /// `U(d, theta) = theta`.
    pub fn identity() -> Self {
        Self::new("identity", (f64::NEG_INFINITY, f64::INFINITY), |_, theta| theta)
            .expect("valid domain")
    }

    pub fn evaluate(&self, d: f64, theta: f64) -> f64 {
        (self.evaluate)(d, theta)
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// One forward simulation `(theta, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPair {
    pub theta: f64,
    pub y: Vec<f64>,
}

pub fn simulate_pairs<M: Model + ?Sized>(model: &M, n: usize, rng: &RandomSource) -> Result<Vec<SimulatedPair>> {
    simulate_pairs_with(model, n, rng, ExecMode::default())
}

/// Draws `n` parameters from the prior and simulates data for each.
///
/// Row `i` is generated from substream `i / SIMULATION_CHUNK` of `rng`.
pub fn simulate_pairs_with<M: Model + ?Sized>(
    model: &M,
    n: usize,
    rng: &RandomSource,
    mode: ExecMode,
) -> Result<Vec<SimulatedPair>> {
    if n == 0 {
        return Err(Error::arg("number of simulations must be at least 1"));
    }
    let n_chunks = n.div_ceil(SIMULATION_CHUNK);
    let chunks = exec::map_indexed(mode, n_chunks, |c| {
        let mut r = rng.substream(c as u64);
        let start = c * SIMULATION_CHUNK;
        let end = (start + SIMULATION_CHUNK).min(n);
        let mut out = Vec::with_capacity(end - start);
        for i in start..end {
            let theta = model.sample_prior(&mut r);
            let y = model.forward(theta, &mut r);
            if !theta.is_finite() || y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Simulation {
                    index: i,
                    reason: "non-finite draw".into(),
                });
            }
            if y.len() != model.n_obs() {
                return Err(Error::Simulation {
                    index: i,
                    reason: format!("forward returned {} values, expected {}", y.len(), model.n_obs()),
                });
            }
            out.push(SimulatedPair { theta, y });
        }
        Ok(out)
    });
    let mut pairs = Vec::with_capacity(n);
    for c in chunks {
        pairs.extend(c?);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::conjugate_posterior;

    #[test]
    fn prior_mean_by_law_of_large_numbers() {
        let m = NormalNormalModel::new(0.0, 1.0, 1.0, 1).unwrap();
        let n = 100_000;
        let pairs = simulate_pairs(&m, n, &RandomSource::new(5)).unwrap();
        assert_eq!(pairs.len(), n);
        let mean = pairs.iter().map(|p| p.theta).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "{mean}");
        assert!(pairs.iter().all(|p| p.y.len() == 1));
    }

    #[test]
    fn degenerate_prior_rejected() {
        assert!(NormalNormalModel::new(0.0, 0.0, 1.0, 1).is_err());
        assert!(NormalNormalModel::new(0.0, 1.0, -1.0, 1).is_err());
        let bad: std::result::Result<NormalNormalModel, _> = serde_json::from_str(
            r#"{"prior_mean":0,"prior_variance":0,"likelihood_variance":1,"n":1}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn fixed_seed_reproduces() {
        let m = NormalNormalModel::new(1.0, 2.0, 3.0, 5).unwrap();
        let a = simulate_pairs(&m, 3000, &RandomSource::new(9)).unwrap();
        let b = simulate_pairs(&m, 3000, &RandomSource::new(9)).unwrap();
        assert_eq!(a, b);
        let c = simulate_pairs_with(&m, 3000, &RandomSource::new(9), ExecMode::Sequential).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn zero_simulations_rejected() {
        let m = NormalNormalModel::new(0.0, 1.0, 1.0, 1).unwrap();
        assert!(simulate_pairs(&m, 0, &RandomSource::new(1)).is_err());
    }

    #[test]
    fn non_finite_draw_names_index() {
        let spec = ModelSpec::new(
            "broken",
            |r: &mut RandomSource| r.uniform(),
            |theta: f64, n: usize, _r: &mut RandomSource| {
                vec![if theta > 0.9 { f64::NAN } else { theta }; n]
            },
            |y: &[f64]| vec![y[0]],
            1,
        )
        .unwrap();
        match simulate_pairs(&spec, 500, &RandomSource::new(2)) {
            Err(Error::Simulation { index, .. }) => assert!(index < 500),
            other => panic!("expected simulation error, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_forward_map() {
        let spec = ModelSpec::new(
            "square",
            |r: &mut RandomSource| r.normal(0.0, 1.0),
            |theta: f64, n: usize, _r: &mut RandomSource| vec![theta * theta; n],
            |y: &[f64]| vec![y.iter().sum::<f64>()],
            3,
        )
        .unwrap();
        assert_eq!(spec.summary_dim(), 1);
        let pairs = simulate_pairs(&spec, 10, &RandomSource::new(3)).unwrap();
        for p in pairs {
            assert_eq!(p.y, vec![p.theta * p.theta; 3]);
        }
    }

    #[test]
    fn posterior_depends_on_data_only_through_mean() {
        let m = NormalNormalModel::new(0.5, 2.0, 4.0, 6).unwrap();
        let mut r = RandomSource::new(4);
        let y = m.observe(1.0, &mut r);
        let mut shuffled = y.clone();
        shuffled.reverse();
        shuffled.swap(0, 3);
        // equal up to summation-order rounding
        assert!((m.summary(&y)[0] - m.summary(&shuffled)[0]).abs() < 1e-14);
        let a = conjugate_posterior(&m, &y).unwrap();
        let b = conjugate_posterior(&m, &shuffled).unwrap();
        assert!((a.mu_star - b.mu_star).abs() < 1e-14);
        assert_eq!(a.sigma_star_sq, b.sigma_star_sq);
    }
}
