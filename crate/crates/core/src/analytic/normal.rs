//! Standard normal distribution function and its inverse.

use crate::error::{Error, Result};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const SQRT_2PI: f64 = 2.506_628_274_631_000_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Complementary error function.
///
/// Uses the positive-term series `erf(z) = 2/sqrt(pi) e^{-z^2} sum 2^k z^{2k+1} / (2k+1)!!`
/// for `|z| < 2.5` and the Laplace continued fraction (modified Lentz) beyond,
/// which keeps full relative precision in the upper tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.5 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

pub fn erf(x: f64) -> f64 {
    if x.abs() < 2.5 {
        if x < 0.0 {
            -erf_series(-x)
        } else {
            erf_series(x)
        }
    } else {
        1.0 - erfc(x)
    }
}

fn erf_series(z: f64) -> f64 {
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= 2.0 * z2 / (2.0 * k + 1.0);
        sum += term;
        if term < sum * 1e-17 || k > 200.0 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-z2).exp() * sum
}

fn erfc_continued_fraction(z: f64) -> f64 {
    // erfc(z) = e^{-z^2}/sqrt(pi) * 1 / (z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
    const TINY: f64 = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 * 0.5;
        d = z + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = z + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-z * z).exp() / (f * std::f64::consts::PI.sqrt())
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 - Phi(x)`, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

/// Standard normal quantile for `p` strictly inside (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile requires p in (0,1), got {p}"
        )));
    }
    Ok(quantile_unchecked(p))
}

/// Quantile that maps 0 and 1 to the infinities instead of erroring.
pub(crate) fn normal_quantile_extended(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        quantile_unchecked(p)
    }
}

fn quantile_unchecked(p: f64) -> f64 {
    // 1 - p is exact for p >= 0.5, so the upper half reflects losslessly.
    if p > 0.5 {
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

/// Rational initial guess (Acklam) refined by one Halley step against `normal_cdf`.
fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    if p == 0.5 {
        return 0.0;
    }
    let e = normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Alternating Maclaurin series for erf, independent of the implementation path.
    fn erf_maclaurin(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut power = x;
        let mut fact = 1.0;
        for n in 0..120 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * power / (fact * (2 * n + 1) as f64);
            power *= x * x;
            fact *= (n + 1) as f64;
        }
        sum * FRAC_2_SQRT_PI
    }

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0_f64, 10.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let cdf = 0.5 * (1.0 + erf_maclaurin(mid / std::f64::consts::SQRT_2));
            if cdf < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(normal_cdf(0.0), 0.5);
    }

    #[test]
    fn quantile_975_matches_bisection_oracle() {
        let oracle = bisect_quantile(0.975);
        assert!((oracle - 1.959_963_984_540_054).abs() < 1e-12, "{oracle}");
        let q = normal_quantile(0.975).unwrap();
        assert!((q - oracle).abs() < 1e-12, "{q} vs {oracle}");
    }

    #[test]
    fn erfc_matches_reference_values() {
        // erfc reference values (Abramowitz & Stegun / high-precision tables)
        let refs = [
            (0.1, 0.887_537_083_981_715),
            (0.5, 0.479_500_122_186_953_5),
            (1.0, 0.157_299_207_050_285_13),
            (2.0, 0.004_677_734_981_047_266),
            (3.0, 2.209_049_699_858_544e-5),
            (5.0, 1.537_459_794_428_035e-12),
        ];
        for (x, want) in refs {
            let got = erfc(x);
            assert!(((got - want) / want).abs() < 1e-12, "erfc({x}) = {got}, want {want}");
        }
        for x in [-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert!((erf(x) - erf_maclaurin(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_identity_over_wide_range() {
        let mut worst: f64 = 0.0;
        let mut ps: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        ps.extend([1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 0.01, 0.02, 0.024, 0.025]);
        ps.extend([1.0 - 1e-8, 1.0 - 1e-6, 1.0 - 1e-4, 0.99, 0.976]);
        for p in ps {
            let x = normal_quantile(p).unwrap();
            worst = worst.max((normal_cdf(x) - p).abs());
        }
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn quantile_rejects_closed_endpoints() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
        assert!(normal_quantile(-0.1).is_err());
    }

    #[test]
    fn tails_are_symmetric() {
        for x in [0.5, 1.0, 3.0, 6.0, 9.0] {
            let lo = normal_cdf(-x);
            assert!(((normal_sf(x) - lo) / lo).abs() < 1e-14);
        }
        let q = normal_quantile(1e-8).unwrap();
        assert!((q + normal_quantile(1.0 - 1e-8).unwrap()).abs() < 1e-6);
    }
}
