//! Conjugate normal-normal updating and its Wang-distortion representation.
//!
//! The posterior survival function is the prior survival function pushed
//! through `g(p) = Phi(lambda1 * Phi^{-1}(p) + lambda)`, so posterior
//! quantiles can be produced from prior quantiles without any density.

use serde::{Deserialize, Serialize};

use super::normal::{normal_cdf, normal_quantile, normal_quantile_extended, normal_sf};
use crate::error::{Error, Result};
use crate::models::NormalNormalModel;

/// Closed-form posterior `theta | y ~ N(mu_star, sigma_star_sq)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPosterior {
    pub mu_star: f64,
    pub sigma_star_sq: f64,
    /// `sigma^2 + n alpha^2`
    pub t: f64,
    /// Sum of the observations.
    pub s: f64,
}

impl NormalPosterior {
    pub fn sigma_star(&self) -> f64 {
        self.sigma_star_sq.sqrt()
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        Ok(self.mu_star + self.sigma_star() * normal_quantile(u)?)
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        normal_cdf((theta - self.mu_star) / self.sigma_star())
    }

    pub fn density(&self, theta: f64) -> f64 {
        let sd = self.sigma_star();
        super::normal::normal_pdf((theta - self.mu_star) / sd) / sd
    }
}

/// Posterior given the number of observations and their sum.
///
/// `n = 0` returns the prior itself.
pub fn posterior_from_sum(model: &NormalNormalModel, n: usize, s: f64) -> NormalPosterior {
    let a2 = model.prior_variance();
    let s2 = model.likelihood_variance();
    let t = s2 + n as f64 * a2;
    NormalPosterior {
        mu_star: (s2 * model.prior_mean() + a2 * s) / t,
        sigma_star_sq: a2 * s2 / t,
        t,
        s,
    }
}

/// Posterior for observed data `y`, whose length must equal `model.n()`.
pub fn conjugate_posterior(model: &NormalNormalModel, y: &[f64]) -> Result<NormalPosterior> {
    if y.len() != model.n() {
        return Err(Error::arg(format!(
            "expected {} observations, got {}",
            model.n(),
            y.len()
        )));
    }
    Ok(posterior_from_sum(model, y.len(), y.iter().sum()))
}

/// Wang distortion `g(p) = Phi(lambda1 * Phi^{-1}(p) + lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WangDistortion {
    pub lambda1: f64,
    pub lambda: f64,
}

impl WangDistortion {
    pub fn new(lambda1: f64, lambda: f64) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda1.is_finite()) || !lambda.is_finite() {
            return Err(Error::arg(format!(
                "Wang distortion needs lambda1 > 0 and finite lambda, got ({lambda1}, {lambda})"
            )));
        }
        Ok(Self { lambda1, lambda })
    }

    pub fn identity() -> Self {
        Self {
            lambda1: 1.0,
            lambda: 0.0,
        }
    }

    /// Evaluates g on the closed interval, with g(0) = 0 and g(1) = 1.
    pub fn eval(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        normal_cdf(self.lambda1 * normal_quantile_extended(p) + self.lambda)
    }

    pub fn eval_inverse(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        if q >= 1.0 {
            return 1.0;
        }
        normal_cdf((normal_quantile_extended(q) - self.lambda) / self.lambda1)
    }
}

/// `lambda1 = alpha / sigma_star`, `lambda = alpha * lambda1 * (s - n mu) / t`.
pub fn wang_params(model: &NormalNormalModel, y: &[f64]) -> Result<WangDistortion> {
    let post = conjugate_posterior(model, y)?;
    Ok(wang_params_from_posterior(model, &post, y.len()))
}

pub fn wang_params_from_posterior(
    model: &NormalNormalModel,
    post: &NormalPosterior,
    n: usize,
) -> WangDistortion {
    let alpha = model.prior_variance().sqrt();
    let lambda1 = alpha / post.sigma_star();
    let lambda = alpha * lambda1 * (post.s - n as f64 * model.prior_mean()) / post.t;
    WangDistortion { lambda1, lambda }
}

fn check_open_unit(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must lie in (0,1), got {x}")))
    }
}

pub fn wang_g(p: f64, w: &WangDistortion) -> Result<f64> {
    check_open_unit(p, "p")?;
    Ok(normal_cdf(w.lambda1 * normal_quantile(p)? + w.lambda))
}

/// `g^{-1}(q) = Phi((Phi^{-1}(q) - lambda) / lambda1)`.
pub fn wang_g_inverse(q: f64, w: &WangDistortion) -> Result<f64> {
    check_open_unit(q, "q")?;
    Ok(normal_cdf((normal_quantile(q)? - w.lambda) / w.lambda1))
}

/// Largest absolute gap between the posterior survival function and the
/// distorted prior survival function over `thetas`.
pub fn prior_to_posterior_survival_check(
    thetas: &[f64],
    model: &NormalNormalModel,
    y: &[f64],
) -> Result<f64> {
    let w = wang_params(model, y)?;
    let post = conjugate_posterior(model, y)?;
    Ok(survival_gap(thetas, model, &post, &w))
}

/// Same comparison with an explicit distortion (used for negative controls).
pub fn survival_gap(
    thetas: &[f64],
    model: &NormalNormalModel,
    post: &NormalPosterior,
    w: &WangDistortion,
) -> f64 {
    let alpha = model.prior_variance().sqrt();
    let sd_star = post.sigma_star();
    thetas
        .iter()
        .map(|&theta| {
            let lhs = normal_sf((theta - post.mu_star) / sd_star);
            let rhs = w.eval(normal_sf((theta - model.prior_mean()) / alpha));
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// Posterior u-quantile obtained by distorting the prior quantile:
/// `Q_post(u) = Q_prior(1 - g^{-1}(1 - u))`.
pub fn posterior_quantile_via_distortion(
    u: f64,
    model: &NormalNormalModel,
    y: &[f64],
) -> Result<f64> {
    check_open_unit(u, "u")?;
    let w = if y.is_empty() {
        WangDistortion::identity()
    } else {
        wang_params(model, y)?
    };
    let s = wang_g_inverse(1.0 - u, &w)?;
    // Q_prior(1 - s) = mu - alpha * Phi^{-1}(s), avoiding the rounding of 1 - s.
    Ok(model.prior_mean() - model.prior_variance().sqrt() * normal_quantile(s)?)
}
