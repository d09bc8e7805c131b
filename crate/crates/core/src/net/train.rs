//! Minibatch training of quantile networks with early stopping.

use serde::{Deserialize, Serialize};

use super::adam::{optimizer_step, OptimizerState};
use super::dense::DenseNet;
use super::grad::{batch_gradient, pinball};
use crate::analytic::normal_quantile;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::models::RandomSource;

/// Hidden layer widths used when no architecture is given.
pub const DEFAULT_HIDDEN: [usize; 3] = [64, 64, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub tau_encoding: TauEncoding,
    pub exec: ExecMode,
}

/// How the quantile level is presented to the network before z-scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauEncoding {
    /// `tau` itself.
    Linear,
    /// The normal score `Phi^{-1}(tau)`, which spreads the tails out.
    #[default]
    NormalScore,
}

impl TauEncoding {
    pub fn apply(self, tau: f64) -> f64 {
        match self {
            TauEncoding::Linear => tau,
            TauEncoding::NormalScore => normal_quantile(tau).unwrap_or(f64::NAN),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
            lr_decay: 1.0,
            tau_encoding: TauEncoding::default(),
            exec: ExecMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::arg("batch_size, max_epochs and patience must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::arg("validation_fraction must lie in (0,1)"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::arg("lr_decay must lie in (0,1]"));
        }
        Ok(())
    }
}

/// A training row: conditioning features, the target and its quantile level.
/// The network sees `[features..., tau]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub features: Vec<f64>,
    pub target: f64,
    pub tau: f64,
}

impl TrainExample {
    pub fn new(features: Vec<f64>, target: f64, tau: f64) -> Self {
        Self { features, target, tau }
    }
}

/// Affine maps to and from the network's standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
    /// The target had zero variance; only centering was applied.
    pub degenerate_target: bool,
    pub tau_encoding: TauEncoding,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn usable_scale(sd: f64, mean: f64) -> bool {
    sd > 1e-12 * mean.abs().max(1.0)
}

impl Standardization {
    pub fn identity(input_dim: usize) -> Self {
        Self {
            input_mean: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            target_mean: 0.0,
            target_scale: 1.0,
            degenerate_target: false,
            tau_encoding: TauEncoding::Linear,
        }
    }

    fn fit(rows: &[&TrainExample], tau_encoding: TauEncoding) -> Self {
        let dim = rows[0].features.len() + 1;
        let mut input_mean = Vec::with_capacity(dim);
        let mut input_scale = Vec::with_capacity(dim);
        for j in 0..dim {
            let col = rows
                .iter()
                .map(move |r| if j + 1 == dim { tau_encoding.apply(r.tau) } else { r.features[j] });
            let (m, s) = mean_sd(col);
            input_mean.push(m);
            input_scale.push(if usable_scale(s, m) { s } else { 1.0 });
        }
        let (tm, ts) = mean_sd(rows.iter().map(|r| r.target));
        let degenerate_target = !usable_scale(ts, tm);
        Self {
            input_mean,
            input_scale,
            target_mean: tm,
            target_scale: if degenerate_target { 1.0 } else { ts },
            degenerate_target,
            tau_encoding,
        }
    }

    fn encode_into(&self, features: &[f64], tau: f64, out: &mut [f64]) {
        let dim = out.len();
        for j in 0..dim {
            let v = if j + 1 == dim { self.tau_encoding.apply(tau) } else { features[j] };
            out[j] = (v - self.input_mean[j]) / self.input_scale[j];
        }
    }

    fn encode_target(&self, t: f64) -> f64 {
        (t - self.target_mean) / self.target_scale
    }

    fn decode_target(&self, z: f64) -> f64 {
        self.target_mean + self.target_scale * z
    }
}

/// A trained map `(features, tau) -> quantile`, carrying its standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileNet {
    pub net: DenseNet,
    pub standardization: Standardization,
    pub seed: u64,
    pub config: TrainConfig,
}

impl QuantileNet {
    pub fn feature_dim(&self) -> usize {
        self.net.input_dim() - 1
    }

    fn check_query(&self, features: &[f64], taus: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim() {
            return Err(Error::Shape {
                expected: self.feature_dim(),
                got: features.len(),
            });
        }
        if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::domain(format!("quantile level {t} outside (0,1)")));
        }
        Ok(())
    }

    /// Quantile at level `tau` given the conditioning features.
    pub fn predict(&self, features: &[f64], tau: f64) -> Result<f64> {
        self.check_query(features, &[tau])?;
        let mut x = vec![0.0; self.net.input_dim()];
        self.standardization.encode_into(features, tau, &mut x);
        Ok(self.standardization.decode_target(self.net.forward(&x)?))
    }

    /// Quantiles for a list of levels at fixed features.
    pub fn predict_many(&self, features: &[f64], taus: &[f64]) -> Result<Vec<f64>> {
        self.check_query(features, taus)?;
        let mut ws = super::dense::Workspace::new(&self.net);
        let mut x = vec![0.0; self.net.input_dim()];
        Ok(taus
            .iter()
            .map(|&tau| {
                self.standardization.encode_into(features, tau, &mut x);
                self.standardization.decode_target(self.net.forward_ws(&x, &mut ws))
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: QuantileNet,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Default quantile-network architecture for `feature_dim` conditioning inputs.
pub fn default_architecture(feature_dim: usize) -> Vec<usize> {
    let mut sizes = vec![feature_dim + 1];
    sizes.extend(DEFAULT_HIDDEN);
    sizes.push(1);
    sizes
}

/// Trains `net` on `data` with pinball loss and Adam, keeping the parameters
/// with the best validation loss.
///
/// A seeded shuffle holds out `validation_fraction` of the rows. Inputs and
/// targets are z-scored with constants fitted on the training rows.
pub fn train(net: DenseNet, data: &[TrainExample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::data("no training data"));
    }
    let feature_dim = data[0].features.len();
    if net.input_dim() != feature_dim + 1 {
        return Err(Error::Shape {
            expected: net.input_dim(),
            got: feature_dim + 1,
        });
    }
    for (i, ex) in data.iter().enumerate() {
        if ex.features.len() != feature_dim {
            return Err(Error::data(format!("row {i} has {} features, expected {feature_dim}", ex.features.len())));
        }
        if !ex.target.is_finite() || ex.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("row {i} contains non-finite values")));
        }
        if !(ex.tau > 0.0 && ex.tau < 1.0) {
            return Err(Error::data(format!("row {i} has tau {} outside (0,1)", ex.tau)));
        }
    }

    let mut rng = RandomSource::with_stream(config.seed, 0x0074_7261_696e);
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    let mut n_val = (config.validation_fraction * data.len() as f64).round() as usize;
    if n_val >= data.len() {
        n_val = data.len() - 1;
    }
    let (val_idx, train_idx) = order.split_at(n_val);

    let train_rows: Vec<&TrainExample> = train_idx.iter().map(|&i| &data[i]).collect();
    let scaling = Standardization::fit(&train_rows, config.tau_encoding);
    if scaling.degenerate_target {
        log::warn!("target column has zero variance; standardization falls back to centering only");
    }

    let dim = feature_dim + 1;
    let encode = |idx: &[usize]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; idx.len() * dim];
        let mut t = Vec::with_capacity(idx.len());
        let mut tau = Vec::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            let ex = &data[i];
            scaling.encode_into(&ex.features, ex.tau, &mut x[k * dim..(k + 1) * dim]);
            t.push(scaling.encode_target(ex.target));
            tau.push(ex.tau);
        }
        (x, t, tau)
    };
    let (tx, tt, ttau) = encode(train_idx);
    let (vx, vt, vtau) = encode(val_idx);
    let n_train = tt.len();

    let mut net = net;
    let mut opt = OptimizerState::new(&net, config.learning_rate)?;
    let mut best = net.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut perm: Vec<usize> = (0..n_train).collect();

    for epoch in 1..=config.max_epochs {
        let mut epoch_rng = rng.substream(epoch as u64);
        epoch_rng.shuffle(&mut perm);
        let mut train_loss = 0.0;
        for batch in perm.chunks(config.batch_size) {
            let (loss, grads) = batch_gradient(
                &net,
                batch.len(),
                |k| {
                    let i = batch[k];
                    (&tx[i * dim..(i + 1) * dim], tt[i], ttau[i])
                },
                config.exec,
            );
            train_loss += loss * batch.len() as f64;
            optimizer_step(&mut opt, &mut net, &grads)?;
        }
        train_loss /= n_train as f64;
        if !net.is_finite() {
            return Err(Error::numeric(format!("parameters diverged in epoch {epoch}")));
        }
        let validation_loss = if vt.is_empty() {
            train_loss
        } else {
            mean_loss(&net, &vx, &vt, &vtau, dim, config.exec)
        };
        history.push(EpochLoss {
            epoch,
            train_loss,
            validation_loss,
        });
        if validation_loss < best_loss {
            best_loss = validation_loss;
            best = net.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
        opt.learning_rate *= config.lr_decay;
    }

    Ok(TrainOutcome {
        net: QuantileNet {
            net: best,
            standardization: scaling,
            seed: config.seed,
            config: config.clone(),
        },
        history,
        best_epoch,
        stopped_early,
    })
}

fn mean_loss(net: &DenseNet, x: &[f64], t: &[f64], tau: &[f64], dim: usize, mode: ExecMode) -> f64 {
    let idx: Vec<usize> = (0..t.len()).collect();
    let partial = exec::map_chunks(mode, &idx, 256, |chunk| {
        let mut ws = super::dense::Workspace::new(net);
        chunk
            .iter()
            .map(|&i| pinball(t[i] - net.forward_ws(&x[i * dim..(i + 1) * dim], &mut ws), tau[i]))
            .sum::<f64>()
    });
    partial.iter().sum::<f64>() / t.len() as f64
}
