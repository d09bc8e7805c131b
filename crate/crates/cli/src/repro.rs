//! Full preset runs that write figure data (CSV + SVG) and a pass/fail report.

use std::fs;
use std::path::{Path, PathBuf};

use gbc_core::analytic::{cara_normal_eu, normal_pdf, normal_quantile, normal_sf, NormalPosterior, WangDistortion};
use gbc_core::engine::fmt_float;
use gbc_core::models::{NormalNormalModel, PortfolioProblem};
use gbc_core::net::EpochLoss;
use gbc_core::presets::{NormalNormalExperiment, PortfolioExperiment};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::pipeline::{run_normal_normal, run_portfolio, NormalNormalRun, PortfolioRun};
use crate::svg::{Plot, Series};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<"`, `"<="` or `">"`.
    pub relation: &'static str,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<",
            limit,
            pass: value < limit,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<=",
            limit,
            pass: value <= limit,
        }
    }

    pub fn above(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: ">",
            limit,
            pass: value > limit,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.6e} {} {:e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.relation,
            self.limit
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproReport {
    pub experiment: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl ReproReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join("report.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        write_file(&path, text)?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes a CSV with a header and float rows at full precision.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.into_iter().map(fmt_float)).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_loss_history(path: &Path, history: &[EpochLoss]) -> CliResult<()> {
    write_table(
        path,
        &["epoch", "train_loss", "validation_loss"],
        history
            .iter()
            .map(|h| vec![h.epoch as f64, h.train_loss, h.validation_loss]),
    )
}

/// Smallest increment of a sequence represented by a value and its complement
/// `1 - value`. Where the value saturates at 1 in floating point the
/// complement still resolves the step.
pub fn min_increment(values: &[f64], complements: &[f64]) -> f64 {
    values
        .windows(2)
        .zip(complements.windows(2))
        .map(|(v, c)| {
            let dv = v[1] - v[0];
            if dv != 0.0 {
                dv
            } else {
                c[0] - c[1]
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest second difference; negative everywhere means strictly concave on the grid.
pub fn max_second_difference(values: &[f64]) -> f64 {
    values
        .windows(3)
        .map(|w| w[2] - 2.0 * w[1] + w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

pub struct FigurePanels {
    pub files: Vec<PathBuf>,
    pub g_min_increment: f64,
}

fn density(x: f64, mean: f64, sd: f64) -> f64 {
    normal_pdf((x - mean) / sd) / sd
}

/// Prior, likelihood and posterior densities, the distortion `g` and the
/// survival curves for the normal-normal model.
pub fn normal_normal_panels(
    model: &NormalNormalModel,
    summary: f64,
    post: &NormalPosterior,
    wang: &WangDistortion,
    dir: &Path,
) -> CliResult<FigurePanels> {
    let alpha = model.prior_variance().sqrt();
    let mu = model.prior_mean();
    let se = (model.likelihood_variance() / model.n().max(1) as f64).sqrt();
    let lo = (mu - 3.0 * alpha).min(post.mu_star - 4.0 * post.sigma_star());
    let hi = (mu + 3.0 * alpha).max(post.mu_star + 4.0 * post.sigma_star());
    let thetas: Vec<f64> = (0..=600).map(|i| lo + (hi - lo) * i as f64 / 600.0).collect();

    let mut files = Vec::new();
    let dens: Vec<[f64; 4]> = thetas
        .iter()
        .map(|&t| {
            [
                t,
                density(t, mu, alpha),
                density(summary, t, se),
                post.density(t),
            ]
        })
        .collect();
    let path = dir.join("densities.csv");
    write_table(&path, &["theta", "prior", "likelihood", "posterior"], dens.iter().map(|r| r.to_vec()))?;
    files.push(path);
    let col = |k: usize| dens.iter().map(|r| (r[0], r[k])).collect::<Vec<_>>();
    let plot = Plot::new("Model for simulated data", "theta", "density")
        .series(Series::new("prior", col(1)))
        .series(Series::new("likelihood", col(2)).dashed())
        .series(Series::new("posterior", col(3)));
    let path = dir.join("densities.svg");
    write_file(&path, plot.render())?;
    files.push(path);

    let mut g_rows = Vec::with_capacity(999);
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        let z = wang.lambda1 * normal_quantile(p).map_err(CliError::from)? + wang.lambda;
        g_rows.push([p, wang.eval(p), normal_sf(z)]);
    }
    let path = dir.join("distortion.csv");
    write_table(&path, &["p", "g", "one_minus_g"], g_rows.iter().map(|r| r.to_vec()))?;
    files.push(path);
    let g: Vec<f64> = g_rows.iter().map(|r| r[1]).collect();
    let gc: Vec<f64> = g_rows.iter().map(|r| r[2]).collect();
    let plot = Plot::new(
        format!("Distortion function g (lambda1 = {:.4}, lambda = {:.4})", wang.lambda1, wang.lambda),
        "p",
        "g(p)",
    )
    .series(Series::new("g", g_rows.iter().map(|r| (r[0], r[1])).collect()))
    .series(Series::new("identity", vec![(0.0, 0.0), (1.0, 1.0)]).dashed());
    let path = dir.join("distortion.svg");
    write_file(&path, plot.render())?;
    files.push(path);

    let surv: Vec<[f64; 4]> = thetas
        .iter()
        .map(|&t| {
            let prior = normal_sf((t - mu) / alpha);
            let posterior = normal_sf((t - post.mu_star) / post.sigma_star());
            [t, prior, posterior, wang.eval(prior)]
        })
        .collect();
    let path = dir.join("survival.csv");
    write_table(
        &path,
        &["theta", "prior_survival", "posterior_survival", "distorted_prior_survival"],
        surv.iter().map(|r| r.to_vec()),
    )?;
    files.push(path);
    let col = |k: usize| surv.iter().map(|r| (r[0], r[k])).collect::<Vec<_>>();
    let plot = Plot::new("1 - Phi", "theta", "survival")
        .series(Series::new("prior", col(1)))
        .series(Series::new("posterior", col(2)))
        .series(Series::new("g(prior)", col(3)).dashed());
    let path = dir.join("survival.svg");
    write_file(&path, plot.render())?;
    files.push(path);

    Ok(FigurePanels {
        files,
        g_min_increment: min_increment(&g, &gc),
    })
}

pub struct EuCurveFiles {
    pub files: Vec<PathBuf>,
    /// Largest second difference of the closed-form EU on the grid.
    pub analytic_max_second_difference: f64,
}

pub fn portfolio_curve(
    problem: &PortfolioProblem,
    run: &PortfolioRun,
    dir: &Path,
) -> CliResult<EuCurveFiles> {
    let curve = &run.result.curve;
    let exact: Vec<f64> = curve
        .iter()
        .map(|p| cara_normal_eu(p.d, problem))
        .collect::<Result<_, _>>()?;
    let mut files = Vec::new();
    let path = dir.join("eu_curve.csv");
    write_table(
        &path,
        &["d", "eu", "se", "analytic_eu"],
        curve.iter().zip(&exact).map(|(p, e)| vec![p.d, p.eu, p.se, *e]),
    )?;
    files.push(path);
    let plot = eu_plot(
        curve.iter().map(|p| (p.d, p.eu)).collect(),
        Some(curve.iter().map(|p| p.d).zip(exact.iter().copied()).collect()),
        run.kelly,
        run.result.best_decision,
    );
    let path = dir.join("eu_curve.svg");
    write_file(&path, plot.render())?;
    files.push(path);
    Ok(EuCurveFiles {
        files,
        analytic_max_second_difference: max_second_difference(&exact),
    })
}

pub fn eu_plot(estimated: Vec<(f64, f64)>, exact: Option<Vec<(f64, f64)>>, optimum: f64, best: f64) -> Plot {
    let mut plot = Plot::new("Expected utility over the portfolio weight", "omega", "E[U]")
        .series(Series::new("quantile net", estimated));
    if let Some(e) = exact {
        plot = plot.series(Series::new("closed form", e).dashed());
    }
    plot.marker(optimum, format!("{optimum:.2} optimum"))
        .marker(best, format!("estimate {best:.3}"))
}

pub fn repro_normal_normal(e: &NormalNormalExperiment, dir: &Path) -> CliResult<(NormalNormalRun, ReproReport)> {
    let run = run_normal_normal(e)?;
    let mut files = Vec::new();

    let net_path = dir.join("net.json");
    run.training.net.save(&net_path)?;
    files.push(net_path);
    let loss = dir.join("loss.csv");
    write_loss_history(&loss, &run.training.history)?;
    files.push(loss);
    let sample = dir.join("posterior_sample.csv");
    write_table(
        &sample,
        &["tau", "theta"],
        run.sample.taus.iter().zip(&run.sample.values).map(|(t, v)| vec![*t, *v]),
    )?;
    files.push(sample);

    let panels = normal_normal_panels(&e.model, run.summary, &run.posterior, &run.wang, dir)?;
    files.extend(panels.files);

    let c = &run.check;
    let checks = vec![
        Check::below("posterior KS distance", c.ks, 0.05),
        Check::below("|mean error| / sigma*", c.mean_error.abs(), 0.1),
        Check::below("|sd ratio - 1|", (c.sd_ratio - 1.0).abs(), 0.1),
        Check::below("Wang survival gap", run.wang_gap, 1e-9),
        Check::above("min increment of g", panels.g_min_increment, 0.0),
    ];
    let mut report = ReproReport {
        experiment: "normal-normal".into(),
        seed: e.seed,
        checks,
        files,
    };
    let path = report.write(dir)?;
    report.files.push(path);
    Ok((run, report))
}

pub fn repro_portfolio(e: &PortfolioExperiment, dir: &Path) -> CliResult<(PortfolioRun, ReproReport)> {
    let run = run_portfolio(e)?;
    let mut files = Vec::new();

    let net_path = dir.join("net.json");
    run.training.net.save(&net_path)?;
    files.push(net_path);
    let loss = dir.join("loss.csv");
    write_loss_history(&loss, &run.training.history)?;
    files.push(loss);
    let result = dir.join("optimization.json");
    write_file(&result, run.result.to_json()?)?;
    files.push(result);

    let curve = portfolio_curve(&e.problem, &run, dir)?;
    files.extend(curve.files);

    let checks = vec![
        Check::at_most(
            format!("|omega* - {:.4}|", run.kelly),
            (run.result.best_decision - run.kelly).abs(),
            0.05,
        ),
        Check::below(
            "max second difference of closed-form EU",
            curve.analytic_max_second_difference,
            0.0,
        ),
    ];
    let mut report = ReproReport {
        experiment: "portfolio".into(),
        seed: e.seed,
        checks,
        files,
    };
    let path = report.write(dir)?;
    report.files.push(path);
    Ok((run, report))
}
