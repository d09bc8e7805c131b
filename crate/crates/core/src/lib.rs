//! Generative Bayesian computation for expected-utility decisions.
//!
//! Simulate `(theta, y)` pairs from a generative model, fit a quantile
//! network `H(s(y), tau)` with pinball loss, then read posterior quantiles,
//! expected utilities and optimal decisions off the trained map.

pub mod analytic;
pub mod engine;
pub mod error;
pub mod exec;
pub mod models;
pub mod net;
pub mod presets;

pub use error::{Error, Result};
pub use exec::ExecMode;
