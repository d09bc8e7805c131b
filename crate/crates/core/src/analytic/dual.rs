//! Quantile and survival representations of expectations, and the
//! distortion (dual) view of expected utility.

use std::fmt;
use std::sync::Arc;

use super::normal::{normal_cdf, normal_quantile_extended};
use crate::error::{Error, Result};

/// Default number of midpoint nodes for tau-integrals.
pub const DEFAULT_QUADRATURE_NODES: usize = 4096;

/// Upper tail mass dropped when integrating along the payout axis.
pub const TAIL_TRUNCATION: f64 = 1e-8;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A univariate distribution exposed through its CDF and quantile function.
#[derive(Clone)]
pub struct DistributionView {
    cdf: RealFn,
    quantile: RealFn,
    lower: f64,
    upper: f64,
}

impl fmt::Debug for DistributionView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DistributionView")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish_non_exhaustive()
    }
}

impl DistributionView {
    pub fn new<C, Q>(cdf: C, quantile: Q, lower: f64, upper: f64) -> Self
    where
        C: Fn(f64) -> f64 + Send + Sync + 'static,
        Q: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            cdf: Arc::new(cdf),
            quantile: Arc::new(quantile),
            lower,
            upper,
        }
    }

    pub fn uniform(a: f64, b: f64) -> Self {
        Self::new(
            move |x| ((x - a) / (b - a)).clamp(0.0, 1.0),
            move |p| a + p * (b - a),
            a,
            b,
        )
    }

    pub fn exponential(rate: f64) -> Self {
        Self::new(
            move |x| if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() },
            move |p| -(-p).ln_1p() / rate,
            0.0,
            f64::INFINITY,
        )
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        Self::new(
            move |x| normal_cdf((x - mean) / sd),
            move |p| mean + sd * normal_quantile_extended(p),
            f64::NEG_INFINITY,
            f64::INFINITY,
        )
    }

    /// `exp(N(mu, sigma^2))`.
    pub fn lognormal(mu: f64, sigma: f64) -> Self {
        Self::new(
            move |x| {
                if x <= 0.0 {
                    0.0
                } else {
                    normal_cdf((x.ln() - mu) / sigma)
                }
            },
            move |p| (mu + sigma * normal_quantile_extended(p)).exp(),
            0.0,
            f64::INFINITY,
        )
    }

    /// Point mass at `c`.
    pub fn constant(c: f64) -> Self {
        Self::new(move |x| if x < c { 0.0 } else { 1.0 }, move |_| c, c, c)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (self.cdf)(x)
    }

    pub fn survival(&self, x: f64) -> f64 {
        1.0 - (self.cdf)(x)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        (self.quantile)(p)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }
}

/// A distortion of survival probabilities, `g: [0,1] -> [0,1]`.
pub trait Distortion: Send + Sync {
    fn distort(&self, p: f64) -> f64;
}

impl<F> Distortion for F
where
    F: Fn(f64) -> f64 + Send + Sync,
{
    fn distort(&self, p: f64) -> f64 {
        self(p)
    }
}

impl Distortion for super::WangDistortion {
    fn distort(&self, p: f64) -> f64 {
        self.eval(p)
    }
}

fn midpoints(a: f64, b: f64, m: usize) -> impl Iterator<Item = (f64, f64)> {
    let h = (b - a) / m as f64;
    (0..m).map(move |i| (a + (i as f64 + 0.5) * h, h))
}

fn check_nodes(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::arg("quadrature needs at least one node"));
    }
    Ok(())
}

/// Midpoint-rule `int_0^u F^{-1}(s) ds`.
pub fn partial_quantile_integral(dist: &DistributionView, u: f64, m: usize) -> Result<f64> {
    check_nodes(m)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("u must lie in [0,1], got {u}")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let total: f64 = midpoints(0.0, u, m).map(|(s, h)| dist.quantile(s) * h).sum();
    if !total.is_finite() {
        return Err(Error::numeric("quantile integral is not finite"));
    }
    Ok(total)
}

/// Mean as the quantile integral `int_0^1 F^{-1}(tau) dtau`.
pub fn expectation_via_quantile(dist: &DistributionView, m: usize) -> Result<f64> {
    partial_quantile_integral(dist, 1.0, m)
}

/// Normalized Lorenz curve `L(u) = (1/Z) int_0^u F^{-1}(s) ds` with `Z = E(U)`.
///
/// `Z` is computed with the same rule, so `L(1) = 1` exactly. A normalizer that
/// keeps moving when the node count doubles is reported as a divergent tail.
pub fn lorenz_point(dist: &DistributionView, u: f64, m: usize) -> Result<f64> {
    check_nodes(m)?;
    let z = expectation_via_quantile(dist, m)?;
    let z2 = expectation_via_quantile(dist, 2 * m)?;
    if (z2 - z).abs() > 1e-2 * z.abs().max(1e-12) {
        return Err(Error::numeric(format!(
            "quantile integral does not converge ({z} at {m} nodes, {z2} at {} nodes)",
            2 * m
        )));
    }
    if z == 0.0 {
        return Err(Error::numeric("Lorenz normalizer E(U) is zero"));
    }
    if u == 1.0 {
        return Ok(1.0);
    }
    Ok(partial_quantile_integral(dist, u, m)? / z)
}

fn payout_upper(dist: &DistributionView) -> Result<f64> {
    let hi = dist.quantile(1.0 - TAIL_TRUNCATION);
    if !hi.is_finite() {
        return Err(Error::numeric("upper truncation quantile is not finite"));
    }
    Ok(hi)
}

/// Mean as `int_0^inf S(t) dt` for a nonnegative random variable.
pub fn expectation_via_survival(dist: &DistributionView, m: usize) -> Result<f64> {
    check_nodes(m)?;
    if dist.lower() < 0.0 {
        return Err(Error::domain(
            "survival-integral expectation needs nonnegative support; use the quantile route",
        ));
    }
    let hi = payout_upper(dist)?;
    Ok(midpoints(0.0, hi, m).map(|(t, h)| dist.survival(t) * h).sum())
}

/// Mean as `int_0^inf S(t) dt - int_{-inf}^0 F(t) dt`, valid for any support.
///
/// Both tails are truncated at mass `TAIL_TRUNCATION`.
pub fn expectation_via_signed_survival(dist: &DistributionView, m: usize) -> Result<f64> {
    check_nodes(m)?;
    let hi = payout_upper(dist)?;
    let lo = dist.quantile(TAIL_TRUNCATION);
    if !lo.is_finite() {
        return Err(Error::numeric("lower truncation quantile is not finite"));
    }
    let mut total = 0.0;
    if hi > 0.0 {
        total += midpoints(0.0, hi, m).map(|(t, h)| dist.survival(t) * h).sum::<f64>();
    }
    if lo < 0.0 {
        total -= midpoints(lo, 0.0, m).map(|(t, h)| dist.cdf(t) * h).sum::<f64>();
    }
    Ok(total)
}

/// Dual-theory value `int_0^inf g(S_X(t)) dt`.
pub fn distorted_expectation<G: Distortion + ?Sized>(
    dist: &DistributionView,
    g: &G,
    m: usize,
) -> Result<f64> {
    check_nodes(m)?;
    let (g0, g1) = (g.distort(0.0), g.distort(1.0));
    if g0.abs() > 1e-12 || (g1 - 1.0).abs() > 1e-12 {
        return Err(Error::arg(format!(
            "distortion must satisfy g(0)=0 and g(1)=1, got g(0)={g0}, g(1)={g1}"
        )));
    }
    if dist.lower() < 0.0 {
        return Err(Error::domain("distorted expectation needs nonnegative support"));
    }
    let hi = payout_upper(dist)?;
    Ok(midpoints(0.0, hi, m)
        .map(|(t, h)| g.distort(dist.survival(t)) * h)
        .sum())
}

/// A strictly increasing utility together with its inverse.
#[derive(Clone)]
pub struct InvertibleUtility {
    forward: RealFn,
    inverse: RealFn,
}

impl InvertibleUtility {
    pub fn new<U, V>(forward: U, inverse: V) -> Self
    where
        U: Fn(f64) -> f64 + Send + Sync + 'static,
        V: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
        }
    }

    pub fn identity() -> Self {
        Self::new(|x| x, |x| x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.forward)(x)
    }

    pub fn invert(&self, y: f64) -> f64 {
        (self.inverse)(y)
    }
}

/// The distortion that makes the dual value of X equal `E[u(X)]`:
/// `g(p) = S_X(u^{-1}(S_X^{-1}(p)))`, so that `S_{u(X)}(t) = g(S_X(t))`.
pub struct YaariDistortion {
    utility: InvertibleUtility,
    dist: DistributionView,
}

impl Distortion for YaariDistortion {
    fn distort(&self, p: f64) -> f64 {
        // The distortion argument is a survival probability; S_X^{-1}(p) = F^{-1}(1 - p).
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        let t = self.dist.quantile(1.0 - p);
        let x = self.utility.invert(t);
        if x.is_nan() {
            return 0.0;
        }
        self.dist.survival(x)
    }
}

/// Builds the Yaari distortion for `u` on `dist`, checking that `u` is
/// strictly increasing and invertible on a grid of support quantiles.
pub fn yaari_g(u: InvertibleUtility, dist: DistributionView) -> Result<YaariDistortion> {
    let mut prev = f64::NEG_INFINITY;
    for i in 1..200 {
        let x = dist.quantile(i as f64 / 200.0);
        let y = u.eval(x);
        if !y.is_finite() || y <= prev {
            return Err(Error::arg(format!(
                "utility is not strictly increasing on the support near x={x}"
            )));
        }
        let back = u.invert(y);
        if !((back - x).abs() <= 1e-6 * (1.0 + x.abs())) {
            return Err(Error::arg(format!(
                "utility inverse does not round-trip at x={x} (got {back})"
            )));
        }
        prev = y;
    }
    Ok(YaariDistortion { utility: u, dist })
}

/// Outcome of the Silver normalization check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilverCheck {
    pub value: f64,
    /// Set when a finite-difference stencil had to be clipped to [0, 1].
    pub clipped: bool,
}

/// `int g'(S_X(t)) dF_X(t)`, evaluated through `tau = F_X(t)` on a midpoint grid
/// with a central-difference derivative (h = 1e-6). Equals 1 for any valid g.
pub fn silver_normalization<G: Distortion + ?Sized>(
    g: &G,
    dist: &DistributionView,
    m: usize,
) -> Result<SilverCheck> {
    check_nodes(m)?;
    const H: f64 = 1e-6;
    let mut clipped = false;
    let mut total = 0.0;
    for (tau, w) in midpoints(0.0, 1.0, m) {
        let s = dist.survival(dist.quantile(tau));
        let (mut lo, mut hi) = (s - H, s + H);
        if lo < 0.0 || hi > 1.0 {
            clipped = true;
            lo = lo.max(0.0);
            hi = hi.min(1.0);
        }
        total += (g.distort(hi) - g.distort(lo)) / (hi - lo) * w;
    }
    if !total.is_finite() {
        return Err(Error::numeric("Silver integral is not finite"));
    }
    Ok(SilverCheck {
        value: total,
        clipped,
    })
}
