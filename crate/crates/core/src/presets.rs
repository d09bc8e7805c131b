//! Named reproduction configurations.
//!
//! Both presets serialize to JSON with an `experiment` tag, so a config file
//! can start from `preset(name)?.to_json()` and be edited by hand.

use serde::{Deserialize, Serialize};

use crate::engine::{EuScheme, OptimizeOptions};
use crate::error::{Error, Result};
use crate::models::{NormalNormalModel, PortfolioProblem, RandomSource};
use crate::net::{TrainConfig, DEFAULT_HIDDEN};

pub const NORMAL_NORMAL: &str = "paper-normal-normal";
pub const PORTFOLIO: &str = "paper-portfolio";
pub const PRESET_NAMES: [&str; 2] = [NORMAL_NORMAL, PORTFOLIO];

/// Stream of the experiment seed used for the observed data.
pub const DATA_STREAM: u64 = 99;
/// Stream of the experiment seed used for posterior draws.
pub const SAMPLE_STREAM: u64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    NormalNormal(NormalNormalExperiment),
    Portfolio(PortfolioExperiment),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalNormalExperiment {
    pub model: NormalNormalModel,
    /// Parameter value the observed sample is drawn around.
    pub true_theta: f64,
    /// Training-table rows.
    pub n_rows: usize,
    pub seed: u64,
    pub sorted_pairing: bool,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub posterior_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioExperiment {
    pub problem: PortfolioProblem,
    /// Training-table rows, spread evenly over the weight grid (rounded up).
    pub n_rows: usize,
    /// Weight grid size, shared by the table and the optimizer.
    pub grid: usize,
    pub seed: u64,
    pub sorted_pairing: bool,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub eu_levels: usize,
    pub eu_scheme: EuScheme,
    pub refine: bool,
    pub tolerance: f64,
}

fn acceptance_schedule(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        lr_decay: 0.96,
        max_epochs: 100,
        patience: 20,
        seed,
        ..TrainConfig::default()
    }
}

pub fn preset(name: &str) -> Result<Experiment> {
    match name {
        NORMAL_NORMAL => Ok(Experiment::NormalNormal(NormalNormalExperiment {
            model: NormalNormalModel::from_sds(0.0, 5.0, 10.0, 100)?,
            true_theta: 3.0,
            n_rows: 100_000,
            seed: 1,
            sorted_pairing: false,
            hidden: DEFAULT_HIDDEN.to_vec(),
            train: acceptance_schedule(1),
            posterior_draws: 10_000,
        })),
        PORTFOLIO => Ok(Experiment::Portfolio(PortfolioExperiment {
            problem: PortfolioProblem::new(0.05, 0.1, 0.25, 2.0, (0.0, 1.0))?,
            n_rows: 100_000,
            grid: 101,
            seed: 1,
            sorted_pairing: true,
            hidden: DEFAULT_HIDDEN.to_vec(),
            train: acceptance_schedule(1),
            eu_levels: 1024,
            eu_scheme: EuScheme::UniformGrid,
            refine: true,
            tolerance: 1e-6,
        })),
        other => Err(Error::arg(format!(
            "unknown preset {other:?}; expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::NormalNormal(_) => "normal-normal",
            Experiment::Portfolio(_) => "portfolio",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Experiment::NormalNormal(e) => e.seed,
            Experiment::Portfolio(e) => e.seed,
        }
    }

    /// Sets the experiment seed and the training seed together.
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Experiment::NormalNormal(e) => {
                e.seed = seed;
                e.train.seed = seed;
            }
            Experiment::Portfolio(e) => {
                e.seed = seed;
                e.train.seed = seed;
            }
        }
    }

    pub fn set_rows(&mut self, n: usize) {
        match self {
            Experiment::NormalNormal(e) => e.n_rows = n,
            Experiment::Portfolio(e) => e.n_rows = n,
        }
    }

    pub fn train_config(&self) -> &TrainConfig {
        match self {
            Experiment::NormalNormal(e) => &e.train,
            Experiment::Portfolio(e) => &e.train,
        }
    }

    pub fn hidden(&self) -> &[usize] {
        match self {
            Experiment::NormalNormal(e) => &e.hidden,
            Experiment::Portfolio(e) => &e.hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.hidden().contains(&0) {
            return Err(Error::arg("hidden layer sizes must be positive"));
        }
        match self {
            Experiment::NormalNormal(e) => e.validate(),
            Experiment::Portfolio(e) => e.validate(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(s)?;
        e.validate()?;
        Ok(e)
    }
}

impl NormalNormalExperiment {
    fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::arg("table size must be positive"));
        }
        if self.model.n() == 0 {
            return Err(Error::arg("observed sample size must be positive"));
        }
        if self.posterior_draws < 2 {
            return Err(Error::arg("need at least two posterior draws"));
        }
        if !self.true_theta.is_finite() {
            return Err(Error::arg("true parameter must be finite"));
        }
        Ok(())
    }

    /// The observed sample: `n` draws around `true_theta` from a fixed stream of the seed.
    pub fn observed_data(&self) -> Vec<f64> {
        let mut rng = RandomSource::with_stream(self.seed, DATA_STREAM);
        self.model.observe(self.true_theta, &mut rng)
    }
}

impl PortfolioExperiment {
    fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::arg("table size must be positive"));
        }
        if self.grid < 2 {
            return Err(Error::arg(format!("weight grid needs at least 2 points, got {}", self.grid)));
        }
        if self.eu_levels < 2 {
            return Err(Error::arg("need at least two EU levels"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::arg("refinement tolerance must be positive"));
        }
        Ok(())
    }

    pub fn draws_per_weight(&self) -> usize {
        self.n_rows.div_ceil(self.grid)
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        OptimizeOptions {
            grid_size: self.grid,
            refine: self.refine,
            tolerance: self.tolerance,
            exec: self.train.exec,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_json() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            p.validate().unwrap();
            let back = Experiment::from_json(&p.to_json().unwrap()).unwrap();
            assert_eq!(back, p);
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn json_is_tagged() {
        let j = preset(PORTFOLIO).unwrap().to_json().unwrap();
        assert!(j.contains("\"experiment\": \"portfolio\""), "{j}");
    }

    #[test]
    fn normal_normal_preset_values() {
        let Experiment::NormalNormal(e) = preset(NORMAL_NORMAL).unwrap() else {
            panic!()
        };
        assert_eq!(e.model.prior_variance(), 25.0);
        assert_eq!(e.model.likelihood_variance(), 100.0);
        let y = e.observed_data();
        assert_eq!(y.len(), 100);
        assert_eq!(y, e.observed_data());
    }

    #[test]
    fn portfolio_rows_cover_request() {
        let Experiment::Portfolio(e) = preset(PORTFOLIO).unwrap() else {
            panic!()
        };
        assert_eq!(e.draws_per_weight(), 991);
        assert!(e.draws_per_weight() * e.grid >= e.n_rows);
        assert_eq!(e.optimize_options().grid_size, 101);
    }

    #[test]
    fn seed_override_reaches_training() {
        let mut p = preset(PORTFOLIO).unwrap();
        p.set_seed(17);
        assert_eq!(p.seed(), 17);
        assert_eq!(p.train_config().seed, 17);
    }

    #[test]
    fn invalid_fields_are_rejected() {
        let mut p = preset(NORMAL_NORMAL).unwrap();
        p.set_rows(0);
        assert!(p.validate().is_err());
        let j = preset(PORTFOLIO).unwrap().to_json().unwrap().replace("\"grid\": 101", "\"grid\": 1");
        assert!(Experiment::from_json(&j).is_err());
    }
}
