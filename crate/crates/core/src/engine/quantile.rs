use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{RandomSource, UtilitySpec};
use crate::net::QuantileNet;

/// Default number of quantile levels in an EU estimate.
pub const DEFAULT_EU_LEVELS: usize = 1024;

/// Anything that returns quantiles at a list of levels in `(0,1)`.
pub trait QuantileSource: Sync {
    fn quantiles(&self, taus: &[f64]) -> Result<Vec<f64>>;
}

/// A quantile function given as a closure.
pub struct FnQuantile<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> QuantileSource for FnQuantile<F> {
    fn quantiles(&self, taus: &[f64]) -> Result<Vec<f64>> {
        Ok(taus.iter().map(|&t| (self.0)(t)).collect())
    }
}

/// Empirical quantile function of a sample: `Q(tau) = x_(ceil(n tau))`.
#[derive(Debug, Clone)]
pub struct EmpiricalQuantile {
    sorted: Vec<f64>,
}

impl EmpiricalQuantile {
    pub fn new(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::arg("empty sample"));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("sample contains non-finite values"));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn quantile(&self, tau: f64) -> f64 {
        let n = self.sorted.len();
        let k = (tau * n as f64).ceil() as usize;
        self.sorted[k.clamp(1, n) - 1]
    }
}

impl QuantileSource for EmpiricalQuantile {
    fn quantiles(&self, taus: &[f64]) -> Result<Vec<f64>> {
        Ok(taus.iter().map(|&t| self.quantile(t)).collect())
    }
}

/// The quantile net at fixed conditioning features, `tau -> H(features, tau)`,
/// with monotone rearrangement across the requested levels.
#[derive(Debug, Clone, Copy)]
pub struct NetSection<'a> {
    pub net: &'a QuantileNet,
    pub features: &'a [f64],
}

impl QuantileSource for NetSection<'_> {
    fn quantiles(&self, taus: &[f64]) -> Result<Vec<f64>> {
        posterior_quantiles(self.net, self.features, taus, true)
    }
}

/// Composed utility draws `U(d, H(S(y), tau))`.
#[derive(Debug, Clone, Copy)]
pub struct ComposedUtility<'a> {
    pub posterior: NetSection<'a>,
    pub utility: &'a UtilitySpec,
    pub decision: f64,
}

impl QuantileSource for ComposedUtility<'_> {
    fn quantiles(&self, taus: &[f64]) -> Result<Vec<f64>> {
        compose_utility_samples(self.posterior.net, self.utility, self.decision, self.posterior.features, taus)
    }
}

/// Sorts `values` and hands them back in the rank order of `taus`, so the
/// result is nondecreasing in tau.
pub fn monotone_rearrange(taus: &[f64], values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));
    let mut out = vec![0.0; values.len()];
    for (k, &i) in order.iter().enumerate() {
        out[i] = sorted[k];
    }
    out
}

/// `H(features, tau_i)` for every level, optionally rearranged.
pub fn posterior_quantiles(net: &QuantileNet, features: &[f64], taus: &[f64], rearrange: bool) -> Result<Vec<f64>> {
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::domain(format!("quantile level {t} outside (0,1)")));
    }
    let raw = net.predict_many(features, taus)?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("network produced a non-finite quantile"));
    }
    Ok(if rearrange { monotone_rearrange(taus, &raw) } else { raw })
}

/// Draws from the learned conditional distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
}

/// `M` draws `H(S(y_obs), tau_i)`, `tau_i ~ U(0,1)`. With `sorted` the levels
/// are sorted first and the outputs rearranged, giving a nondecreasing sequence.
pub fn posterior_sample(
    net: &QuantileNet,
    features: &[f64],
    m: usize,
    rng: &mut RandomSource,
    sorted: bool,
) -> Result<PosteriorSample> {
    if m == 0 {
        return Err(Error::arg("sample size must be positive"));
    }
    let mut taus: Vec<f64> = (0..m).map(|_| rng.uniform()).collect();
    if sorted {
        taus.sort_by(f64::total_cmp);
    }
    let values = posterior_quantiles(net, features, &taus, sorted)?;
    Ok(PosteriorSample { taus, values })
}

/// `U(d, H(S(y_obs), tau_i))` over the given levels, after rearranging the
/// posterior quantiles.
pub fn compose_utility_samples(
    net: &QuantileNet,
    utility: &UtilitySpec,
    decision: f64,
    features: &[f64],
    taus: &[f64],
) -> Result<Vec<f64>> {
    if taus.is_empty() {
        return Err(Error::arg("no quantile levels"));
    }
    let thetas = posterior_quantiles(net, features, taus, true)?;
    thetas
        .iter()
        .map(|&th| {
            let u = utility.evaluate(decision, th);
            if u.is_finite() {
                Ok(u)
            } else {
                Err(Error::numeric(format!("utility not finite at d={decision}, theta={th}")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EuScheme {
    /// Midpoints `(i - 1/2)/M`; deterministic.
    #[default]
    UniformGrid,
    /// `M` i.i.d. uniform levels.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuEstimate {
    pub estimate: f64,
    /// `sd / sqrt(M)` of the quantile values.
    pub standard_error: f64,
}

/// Midpoint levels `(i - 1/2)/m`.
pub fn midpoint_levels(m: usize) -> Vec<f64> {
    (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect()
}

/// `E(U) = int_0^1 F_U^{-1}(tau) dtau`, estimated as the mean of the quantile
/// function over `m` levels.
pub fn expected_utility(
    source: &(impl QuantileSource + ?Sized),
    m: usize,
    scheme: EuScheme,
    rng: &mut RandomSource,
) -> Result<EuEstimate> {
    if m < 2 {
        return Err(Error::arg(format!("need at least 2 quantile levels, got {m}")));
    }
    let taus = match scheme {
        EuScheme::UniformGrid => midpoint_levels(m),
        EuScheme::Random => (0..m).map(|_| rng.uniform()).collect(),
    };
    let q = source.quantiles(&taus)?;
    if q.len() != m || q.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite quantile in expected-utility estimate"));
    }
    Ok(mean_and_se(&q))
}

fn mean_and_se(q: &[f64]) -> EuEstimate {
    let n = q.len() as f64;
    let mut sum = 0.0;
    for v in q {
        sum += v;
    }
    let mean = sum / n;
    let var = q.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    EuEstimate {
        estimate: mean,
        standard_error: (var / n).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{DenseNet, Standardization, TrainConfig};
    use proptest::prelude::*;

    fn grid() -> RandomSource {
        RandomSource::new(0)
    }

    #[test]
    fn constant_quantile() {
        let e = expected_utility(&FnQuantile(|_| 2.5), 100, EuScheme::UniformGrid, &mut grid()).unwrap();
        assert_eq!(e.estimate, 2.5);
        assert_eq!(e.standard_error, 0.0);
        let r = expected_utility(&FnQuantile(|_| 2.5), 100, EuScheme::Random, &mut grid()).unwrap();
        assert_eq!(r.standard_error, 0.0);
    }

    #[test]
    fn standard_normal_and_exponential_means() {
        let q = FnQuantile(|t| crate::analytic::normal_quantile(t).unwrap());
        let e = expected_utility(&q, 10_000, EuScheme::UniformGrid, &mut grid()).unwrap();
        assert!(e.estimate.abs() < 1e-3, "{}", e.estimate);
        let ex = FnQuantile(|t: f64| -(1.0 - t).ln());
        let e = expected_utility(&ex, 10_000, EuScheme::UniformGrid, &mut grid()).unwrap();
        assert!((e.estimate - 1.0).abs() < 2e-3, "{}", e.estimate);
        let e = expected_utility(&ex, 10_000, EuScheme::Random, &mut RandomSource::new(9)).unwrap();
        assert!((e.estimate - 1.0).abs() < 3.0 * e.standard_error);
    }

    #[test]
    fn errors() {
        assert!(expected_utility(&FnQuantile(|_| 1.0), 1, EuScheme::UniformGrid, &mut grid()).is_err());
        let bad = FnQuantile(|t: f64| if t > 0.9 { f64::NAN } else { t });
        assert!(matches!(
            expected_utility(&bad, 100, EuScheme::UniformGrid, &mut grid()),
            Err(Error::Numeric(_))
        ));
        assert!(EmpiricalQuantile::new(&[]).is_err());
    }

    #[test]
    fn rearrangement_sorts_by_level() {
        let taus = [0.9, 0.1, 0.5];
        assert_eq!(monotone_rearrange(&taus, &[1.0, 3.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(monotone_rearrange(&[0.1, 0.5, 0.9], &[2.0, 1.0, 3.0]), vec![1.0, 2.0, 3.0]);
    }

    /// Decreasing in tau for `x + tau > 0`, so rearrangement has work to do.
    fn toy_net() -> QuantileNet {
        let net = DenseNet::from_parts(
            &[2, 2, 1],
            vec![vec![1.0, 1.0, 0.0, -1.0], vec![1.0, 3.0]],
            vec![vec![0.0, 1.0], vec![0.0]],
        )
        .unwrap();
        QuantileNet {
            net,
            standardization: Standardization::identity(2),
            seed: 0,
            config: TrainConfig::default(),
        }
    }

    #[test]
    fn sorted_posterior_sample_is_monotone_and_reproducible() {
        let net = toy_net();
        let a = posterior_sample(&net, &[0.3], 500, &mut RandomSource::new(4), true).unwrap();
        assert!(a.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.taus.windows(2).all(|w| w[0] <= w[1]));
        let b = posterior_sample(&net, &[0.3], 500, &mut RandomSource::new(4), true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_composition_equals_posterior_sample() {
        let net = toy_net();
        let s = posterior_sample(&net, &[0.7], 300, &mut RandomSource::new(5), true).unwrap();
        let u = compose_utility_samples(&net, &UtilitySpec::identity(), 0.0, &[0.7], &s.taus).unwrap();
        assert_eq!(u, s.values);
        let mono = UtilitySpec::new("exp", (0.0, 1.0), |_, th: f64| th.exp()).unwrap();
        let v = compose_utility_samples(&net, &mono, 0.0, &[0.7], &s.taus).unwrap();
        assert!(v.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn composed_source_feeds_expected_utility() {
        let net = toy_net();
        let sq = UtilitySpec::new("sq", (0.0, 1.0), |d, th: f64| d * th * th).unwrap();
        let src = ComposedUtility {
            posterior: NetSection { net: &net, features: &[0.2] },
            utility: &sq,
            decision: 2.0,
        };
        let e = expected_utility(&src, 64, EuScheme::UniformGrid, &mut grid()).unwrap();
        let taus = midpoint_levels(64);
        let th = posterior_quantiles(&net, &[0.2], &taus, false).unwrap();
        let direct = th.iter().map(|t| 2.0 * t * t).sum::<f64>() / 64.0;
        assert!((e.estimate - direct).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn midpoint_integral_of_empirical_quantile_is_sample_mean(
            xs in proptest::collection::vec(-1e3f64..1e3, 2..300)
        ) {
            let q = EmpiricalQuantile::new(&xs).unwrap();
            let e = expected_utility(&q, xs.len(), EuScheme::UniformGrid, &mut grid()).unwrap();
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            let mut s = 0.0;
            for v in &sorted {
                s += v;
            }
            // bitwise equal to the mean accumulated in sorted order
            prop_assert_eq!(e.estimate, s / xs.len() as f64);
            let raw = xs.iter().sum::<f64>() / xs.len() as f64;
            prop_assert!((e.estimate - raw).abs() <= 1e-12 * (1.0 + raw.abs()) * 1e3);
        }

        #[test]
        fn rearranged_sample_is_nondecreasing(seed in any::<u64>(), x in -2.0f64..2.0) {
            let net = toy_net();
            let s = posterior_sample(&net, &[x], 64, &mut RandomSource::new(seed), true).unwrap();
            prop_assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
