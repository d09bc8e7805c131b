use super::table::TrainingTable;
use crate::error::{Error, Result};
use crate::net::{default_architecture, train, DenseNet, TrainConfig, TrainExample, TrainOutcome};

/// Hidden widths for the fitted nets; `None` uses the default architecture.
fn build_net(feature_dim: usize, hidden: Option<&[usize]>, seed: u64) -> Result<DenseNet> {
    let sizes = match hidden {
        Some(h) => {
            let mut s = vec![feature_dim + 1];
            s.extend_from_slice(h);
            s.push(1);
            s
        }
        None => default_architecture(feature_dim),
    };
    DenseNet::he_uniform(&sizes, seed)
}

/// Fits `H(S(y), tau) -> theta`.
pub fn train_posterior_net(
    table: &TrainingTable,
    config: &TrainConfig,
    hidden: Option<&[usize]>,
) -> Result<TrainOutcome> {
    if !table.has_theta() {
        return Err(Error::arg("table has no theta column"));
    }
    let data: Vec<TrainExample> = table
        .rows()
        .iter()
        .map(|r| TrainExample::new(r.summary.clone(), r.theta.unwrap_or(f64::NAN), r.tau))
        .collect();
    let net = build_net(table.summary_dim(), hidden, config.seed)?;
    train(net, &data, config)
}

/// Fits `G(d, tau) -> F^{-1}_{U_d}(tau)`.
pub fn train_utility_net(
    table: &TrainingTable,
    config: &TrainConfig,
    hidden: Option<&[usize]>,
) -> Result<TrainOutcome> {
    if !table.has_decision() || !table.has_utility() {
        return Err(Error::arg("table needs decision and utility columns"));
    }
    let data: Vec<TrainExample> = table
        .rows()
        .iter()
        .map(|r| {
            TrainExample::new(
                vec![r.decision.unwrap_or(f64::NAN)],
                r.utility.unwrap_or(f64::NAN),
                r.tau,
            )
        })
        .collect();
    let net = build_net(1, hidden, config.seed)?;
    train(net, &data, config)
}
