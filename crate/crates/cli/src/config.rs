//! Experiment configuration: a preset or JSON file, then command-line overrides.
//!
//! The JSON schema is the preset document (tagged by `experiment`) plus an
//! optional `out` directory:
//!
//! ```json
//! { "experiment": "portfolio", "problem": { ... }, "n_rows": 100000, "grid": 101,
//!   "seed": 1, "train": { ... }, "out": "results" }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use gbc_core::presets::{preset, Experiment};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_OUT: &str = "out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from(DEFAULT_OUT)
}

impl ExperimentConfig {
    pub fn from_preset(name: &str) -> CliResult<Self> {
        Ok(Self {
            experiment: preset(name)?,
            out: default_out(),
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: invalid config: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))
    }

    /// Creates the output directory and records the resolved config in it.
    pub fn prepare_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let path = self.out.join("config.json");
        fs::write(&path, self.to_json()?).map_err(|e| CliError::io(&path, e))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON experiment config
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named preset: paper-normal-normal or paper-portfolio
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training-table rows
    #[arg(long)]
    pub n: Option<usize>,
    /// Decision grid size (portfolio only)
    #[arg(long)]
    pub grid: Option<usize>,
}

impl CommonArgs {
    /// Loads the config or preset (falling back to `default_preset`) and
    /// applies the flag overrides. Flags win over file values.
    pub fn resolve(&self, default_preset: Option<&str>) -> CliResult<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset, default_preset) {
            (Some(path), _, _) => ExperimentConfig::load(path)?,
            (None, Some(name), _) => ExperimentConfig::from_preset(name)?,
            (None, None, Some(name)) => ExperimentConfig::from_preset(name)?,
            (None, None, None) => return Err(CliError::Usage("one of --config or --preset is required".into())),
        };
        if let Some(seed) = self.seed {
            cfg.experiment.set_seed(seed);
        }
        if let Some(n) = self.n {
            cfg.experiment.set_rows(n);
        }
        if let Some(g) = self.grid {
            match &mut cfg.experiment {
                Experiment::Portfolio(e) => e.grid = g,
                Experiment::NormalNormal(_) => {
                    return Err(CliError::Usage("--grid applies to the portfolio experiment only".into()))
                }
            }
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.experiment.validate()?;
        Ok(cfg)
    }
}
