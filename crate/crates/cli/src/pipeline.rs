//! End-to-end experiment runs shared by the subcommands and the acceptance suite.

use gbc_core::analytic::{
    conjugate_posterior, kelly_weight, prior_to_posterior_survival_check, wang_params, NormalPosterior,
    WangDistortion,
};
use gbc_core::engine::{
    build_portfolio_table, build_training_table, optimize_utility_net, posterior_sample, train_posterior_net,
    train_utility_net, OptimizationResult, PosteriorSample, TableOptions, TrainingTable,
};
use gbc_core::models::{summary_mean, RandomSource};
use gbc_core::net::{QuantileNet, TrainOutcome};
use gbc_core::presets::{Experiment, NormalNormalExperiment, PortfolioExperiment, SAMPLE_STREAM};
use gbc_core::{Error, Result};
use serde::Serialize;

/// Which column the quantile net learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    Theta,
    Utility,
}

impl Target {
    /// Utility when the table has one, else theta.
    pub fn infer(table: &TrainingTable) -> Self {
        if table.has_utility() {
            Target::Utility
        } else {
            Target::Theta
        }
    }
}

pub fn simulate(exp: &Experiment) -> Result<TrainingTable> {
    match exp {
        Experiment::NormalNormal(e) => {
            let opts = TableOptions {
                n: e.n_rows,
                sorted_pairing: e.sorted_pairing,
                exec: e.train.exec,
            };
            build_training_table(&e.model, None, opts, &RandomSource::new(e.seed))
        }
        Experiment::Portfolio(e) => {
            let grid = e.problem.weight_grid(e.grid);
            build_portfolio_table(
                &e.problem,
                &grid,
                e.draws_per_weight(),
                e.sorted_pairing,
                &RandomSource::new(e.seed),
                e.train.exec,
            )
        }
    }
}

pub fn train_table(exp: &Experiment, table: &TrainingTable, target: Target) -> Result<TrainOutcome> {
    let hidden = Some(exp.hidden());
    match target {
        Target::Theta => train_posterior_net(table, exp.train_config(), hidden),
        Target::Utility => train_utility_net(table, exp.train_config(), hidden),
    }
}

pub fn optimize_net(e: &PortfolioExperiment, net: &QuantileNet) -> Result<OptimizationResult> {
    optimize_utility_net(
        net,
        e.problem.weight_domain,
        e.eu_levels,
        e.eu_scheme,
        e.seed,
        &e.optimize_options(),
    )
}

/// Agreement between a posterior sample and the conjugate posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PosteriorCheck {
    pub mu_star: f64,
    pub sigma_star: f64,
    pub sample_mean: f64,
    pub sample_sd: f64,
    /// `(sample mean - mu*) / sigma*`.
    pub mean_error: f64,
    pub sd_ratio: f64,
    /// Kolmogorov-Smirnov distance to the posterior CDF.
    pub ks: f64,
}

pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

pub fn check_posterior(sample: &[f64], post: &NormalPosterior) -> Result<PosteriorCheck> {
    if sample.len() < 2 {
        return Err(Error::Argument("need at least two draws".into()));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let sd = (sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sigma = post.sigma_star();
    Ok(PosteriorCheck {
        mu_star: post.mu_star,
        sigma_star: sigma,
        sample_mean: mean,
        sample_sd: sd,
        mean_error: (mean - post.mu_star) / sigma,
        sd_ratio: sd / sigma,
        ks: ks_distance(sample, |x| post.cdf(x)),
    })
}

pub struct NormalNormalRun {
    pub data: Vec<f64>,
    pub summary: f64,
    pub posterior: NormalPosterior,
    pub wang: WangDistortion,
    /// Largest survival-identity gap on `[-10, 10]`, step 0.01.
    pub wang_gap: f64,
    pub training: TrainOutcome,
    pub sample: PosteriorSample,
    pub check: PosteriorCheck,
}

pub fn theta_check_grid() -> Vec<f64> {
    (0..=2000).map(|i| -10.0 + 0.01 * i as f64).collect()
}

pub fn run_normal_normal(e: &NormalNormalExperiment) -> Result<NormalNormalRun> {
    let data = e.observed_data();
    let posterior = conjugate_posterior(&e.model, &data)?;
    let wang = wang_params(&e.model, &data)?;
    let wang_gap = prior_to_posterior_survival_check(&theta_check_grid(), &e.model, &data)?;
    let exp = Experiment::NormalNormal(e.clone());
    let table = simulate(&exp)?;
    let training = train_table(&exp, &table, Target::Theta)?;
    let summary = summary_mean(&data)?;
    let mut rng = RandomSource::with_stream(e.seed, SAMPLE_STREAM);
    let sample = posterior_sample(&training.net, &[summary], e.posterior_draws, &mut rng, true)?;
    let check = check_posterior(&sample.values, &posterior)?;
    Ok(NormalNormalRun {
        data,
        summary,
        posterior,
        wang,
        wang_gap,
        training,
        sample,
        check,
    })
}

pub struct PortfolioRun {
    pub table_rows: usize,
    pub training: TrainOutcome,
    pub result: OptimizationResult,
    pub kelly: f64,
}

pub fn run_portfolio(e: &PortfolioExperiment) -> Result<PortfolioRun> {
    let exp = Experiment::Portfolio(e.clone());
    let table = simulate(&exp)?;
    let training = train_table(&exp, &table, Target::Utility)?;
    let result = optimize_net(e, &training.net)?;
    Ok(PortfolioRun {
        table_rows: table.len(),
        training,
        result,
        kelly: kelly_weight(&e.problem).weight,
    })
}
