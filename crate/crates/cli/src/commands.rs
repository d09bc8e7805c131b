use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use gbc_core::analytic::kelly_weight;
use gbc_core::engine::{expected_utility, EuScheme, NetSection, Provenance, TrainingTable, DEFAULT_EU_LEVELS};
use gbc_core::models::RandomSource;
use gbc_core::net::QuantileNet;
use gbc_core::presets::{Experiment, NORMAL_NORMAL, PORTFOLIO};

use crate::config::CommonArgs;
use crate::error::{CliError, CliResult};
use crate::pipeline::{optimize_net, simulate, train_table, Target};
use crate::repro::{eu_plot, repro_normal_normal, repro_portfolio, write_file, write_loss_history, ReproReport};

#[derive(Debug, Parser)]
#[command(name = "gbc", version, about = "Quantile-network posteriors and expected-utility decisions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    UniformGrid,
    Random,
}

impl From<SchemeArg> for EuScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::UniformGrid => EuScheme::UniformGrid,
            SchemeArg::Random => EuScheme::Random,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a training table (CSV plus a provenance sidecar)
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a quantile net on a table (net JSON plus loss history CSV)
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        table: PathBuf,
        /// Column to learn; defaults to utility when the table has one
        #[arg(long, value_enum)]
        target: Option<Target>,
    },
    /// Maximize expected utility over the weight grid of a trained utility net
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        net: PathBuf,
    },
    /// Integrate a net's quantile section at one input
    Eu {
        #[arg(long)]
        net: PathBuf,
        /// Comma-separated feature vector
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        input: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_EU_LEVELS)]
        levels: usize,
        #[arg(long, value_enum, default_value = "uniform-grid")]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full preset pipeline and check it: normal-normal or portfolio
    Repro {
        experiment: String,
        #[command(flatten)]
        common: CommonArgs,
    },
}

pub fn provenance_path(table: &Path) -> PathBuf {
    table.with_extension("provenance.json")
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { common } => cmd_simulate(&common),
        Command::Train { common, table, target } => cmd_train(&common, &table, target),
        Command::Optimize { common, net } => cmd_optimize(&common, &net),
        Command::Eu {
            net,
            input,
            levels,
            scheme,
            seed,
        } => cmd_eu(&net, &input, levels, scheme.into(), seed),
        Command::Repro { experiment, common } => cmd_repro(&experiment, &common),
    }
}

fn cmd_simulate(common: &CommonArgs) -> CliResult<()> {
    let cfg = common.resolve(None)?;
    cfg.prepare_out()?;
    let table = simulate(&cfg.experiment)?;
    let path = cfg.out.join("table.csv");
    let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    table.write_csv(std::io::BufWriter::new(file))?;
    let side = provenance_path(&path);
    let prov = serde_json::to_string_pretty(table.provenance()).map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&side, prov)?;
    println!("wrote {} rows to {}", table.len(), path.display());
    Ok(())
}

pub fn read_table(path: &Path) -> CliResult<TrainingTable> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let side = provenance_path(path);
    let prov = if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| CliError::io(&side, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", side.display())))?
    } else {
        Provenance {
            model_id: "unknown".into(),
            n: 0,
            seed: 0,
            sorted_pairing: false,
        }
    };
    let table = TrainingTable::read_csv(std::io::BufReader::new(file), prov)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if table.provenance().n == 0 {
        let mut prov = table.provenance().clone();
        prov.n = table.len();
        return Ok(TrainingTable::new(table.rows().to_vec(), prov)?);
    }
    Ok(table)
}

fn cmd_train(common: &CommonArgs, table_path: &Path, target: Option<Target>) -> CliResult<()> {
    let cfg = common.resolve(None)?;
    let table = read_table(table_path)?;
    cfg.prepare_out()?;
    let target = target.unwrap_or_else(|| Target::infer(&table));
    let out = train_table(&cfg.experiment, &table, target)?;
    let net = cfg.out.join("net.json");
    out.net.save(&net)?;
    write_loss_history(&cfg.out.join("loss.csv"), &out.history)?;
    let best = &out.history[out.best_epoch - 1];
    println!(
        "trained on {} rows: best epoch {} of {}, validation loss {:.6}; wrote {}",
        table.len(),
        out.best_epoch,
        out.history.len(),
        best.validation_loss,
        net.display()
    );
    Ok(())
}

fn load_net(path: &Path) -> CliResult<QuantileNet> {
    Ok(QuantileNet::load(path)?)
}

fn cmd_optimize(common: &CommonArgs, net_path: &Path) -> CliResult<()> {
    let cfg = common.resolve(None)?;
    let Experiment::Portfolio(e) = &cfg.experiment else {
        return Err(CliError::Usage("optimize needs a portfolio experiment".into()));
    };
    let net = load_net(net_path)?;
    cfg.prepare_out()?;
    let result = optimize_net(e, &net)?;
    write_file(&cfg.out.join("optimization.json"), result.to_json()?)?;
    let csv_path = cfg.out.join("eu_curve.csv");
    let file = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    result.write_curve_csv(file)?;
    let optimum = kelly_weight(&e.problem).weight;
    let plot = eu_plot(
        result.curve.iter().map(|p| (p.d, p.eu)).collect(),
        None,
        optimum,
        result.best_decision,
    );
    write_file(&cfg.out.join("eu_curve.svg"), plot.render())?;
    println!(
        "best decision {:.6} (EU {:.6}); closed-form optimum {optimum:.6}",
        result.best_decision, result.best_eu
    );
    Ok(())
}

fn cmd_eu(net_path: &Path, input: &[f64], levels: usize, scheme: EuScheme, seed: u64) -> CliResult<()> {
    let net = load_net(net_path)?;
    if input.len() != net.feature_dim() {
        return Err(CliError::Usage(format!(
            "net takes {} features, got {}",
            net.feature_dim(),
            input.len()
        )));
    }
    let section = NetSection {
        net: &net,
        features: input,
    };
    let mut rng = RandomSource::new(seed);
    let est = expected_utility(&section, levels, scheme, &mut rng)?;
    println!("{}", serde_json::to_string(&est).map_err(|e| CliError::Data(e.to_string()))?);
    Ok(())
}

fn print_report(report: &ReproReport) {
    for c in &report.checks {
        println!("{}", c.line());
    }
    println!(
        "repro {}: {}",
        report.experiment,
        if report.passed() { "PASS" } else { "FAIL" }
    );
}

fn cmd_repro(experiment: &str, common: &CommonArgs) -> CliResult<()> {
    let preset_name = match experiment {
        "normal-normal" => NORMAL_NORMAL,
        "portfolio" => PORTFOLIO,
        other => {
            return Err(CliError::Usage(format!(
                "unknown experiment {other:?}; expected normal-normal or portfolio"
            )))
        }
    };
    let cfg = common.resolve(Some(preset_name))?;
    if cfg.experiment.name() != experiment {
        return Err(CliError::Usage(format!(
            "config describes the {} experiment, not {experiment}",
            cfg.experiment.name()
        )));
    }
    cfg.prepare_out()?;
    let report = match &cfg.experiment {
        Experiment::NormalNormal(e) => repro_normal_normal(e, &cfg.out)?.1,
        Experiment::Portfolio(e) => repro_portfolio(e, &cfg.out)?.1,
    };
    print_report(&report);
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError::Acceptance(failed.join(", ")))
    }
}
