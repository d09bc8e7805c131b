//! Closed-form oracles: normal special functions, conjugate updating, the
//! Wang distortion, dual-theory integrals and the CARA-normal portfolio.

mod conjugate;
mod dual;
mod normal;
mod portfolio;

pub use conjugate::{
    conjugate_posterior, posterior_from_sum, posterior_quantile_via_distortion,
    prior_to_posterior_survival_check, survival_gap, wang_g, wang_g_inverse, wang_params,
    wang_params_from_posterior, NormalPosterior, WangDistortion,
};
pub use dual::{
    distorted_expectation, expectation_via_quantile, expectation_via_signed_survival,
    expectation_via_survival, lorenz_point, partial_quantile_integral, silver_normalization,
    yaari_g, Distortion, DistributionView, InvertibleUtility, SilverCheck, YaariDistortion,
    DEFAULT_QUADRATURE_NODES, TAIL_TRUNCATION,
};
pub use normal::{erf, erfc, normal_cdf, normal_pdf, normal_quantile, normal_sf};
pub use portfolio::{
    cara_normal_argmax, cara_normal_eu, golden_section_max, kelly_weight, KellyWeight,
};
