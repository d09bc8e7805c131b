//! The simulate / fit / integrate / maximize pipeline.

mod fit;
mod optimize;
mod quantile;
mod table;

pub use fit::{train_posterior_net, train_utility_net};
pub use optimize::{
    eu_evaluator, optimize_decision, optimize_utility_net, CurvePoint, OptimizationResult, OptimizeOptions,
};
pub use quantile::{
    compose_utility_samples, expected_utility, midpoint_levels, monotone_rearrange, posterior_quantiles,
    posterior_sample, ComposedUtility, EmpiricalQuantile, EuEstimate, EuScheme, FnQuantile, NetSection,
    PosteriorSample, QuantileSource, DEFAULT_EU_LEVELS,
};
pub use table::{
    build_portfolio_table, build_training_table, fmt_float, Provenance, TableOptions, TableRow, TrainingTable,
    TABLE_HEADER,
};
