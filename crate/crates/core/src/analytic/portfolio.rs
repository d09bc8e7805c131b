//! CARA utility with normal returns: closed-form expected utility and the
//! Kelly/Merton weight.

use crate::error::{Error, Result};
use crate::models::PortfolioProblem;

/// `E[-exp(-gamma W)]` for `W ~ N(m(w), w^2 sigma^2)`, `m(w) = (1-w) r_f + w mu`.
pub fn cara_normal_eu(omega: f64, p: &PortfolioProblem) -> Result<f64> {
    p.check_weight(omega)?;
    Ok(cara_normal_eu_unchecked(omega, p))
}

pub(crate) fn cara_normal_eu_unchecked(omega: f64, p: &PortfolioProblem) -> f64 {
    let g = p.risk_aversion;
    let mean = (1.0 - omega) * p.risk_free + omega * p.return_mean;
    let var = omega * omega * p.return_sd * p.return_sd;
    -(-g * mean + 0.5 * g * g * var).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KellyWeight {
    pub weight: f64,
    /// The unconstrained optimum fell outside the weight domain.
    pub clamped: bool,
    pub unconstrained: f64,
}

/// `(mu - r_f) / (sigma^2 gamma)`, clamped to the weight domain.
pub fn kelly_weight(p: &PortfolioProblem) -> KellyWeight {
    let raw = (p.return_mean - p.risk_free) / (p.return_sd * p.return_sd * p.risk_aversion);
    let (lo, hi) = p.weight_domain;
    let weight = raw.clamp(lo, hi);
    KellyWeight {
        weight,
        clamped: weight != raw,
        unconstrained: raw,
    }
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
///
/// Stops once the bracket is narrower than `tol`; returns the best point seen
/// and its value.
pub fn golden_section_max<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::arg(format!("invalid bracket [{a}, {b}]")));
    }
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut iters = 0;
    while hi - lo > tol && iters < 200 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
        iters += 1;
    }
    // The endpoints are candidates too, for maxima on the boundary.
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let v = f(x)?;
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Numerical argmax of `cara_normal_eu` over the weight domain.
pub fn cara_normal_argmax(p: &PortfolioProblem, tol: f64) -> Result<f64> {
    let (lo, hi) = p.weight_domain;
    golden_section_max(|w| Ok(cara_normal_eu_unchecked(w, p)), lo, hi, tol).map(|(w, _)| w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> PortfolioProblem {
        PortfolioProblem::new(0.05, 0.1, 0.25, 2.0, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn riskless_weight_gives_deterministic_utility() {
        let eu = cara_normal_eu(0.0, &paper()).unwrap();
        assert_eq!(eu, -(-0.1_f64).exp());
    }

    #[test]
    fn kelly_values() {
        let k = kelly_weight(&paper());
        assert!((k.weight - 0.40).abs() < 1e-12);
        assert!(!k.clamped);

        let flat = PortfolioProblem::new(0.05, 0.05, 0.25, 2.0, (0.0, 1.0)).unwrap();
        assert_eq!(kelly_weight(&flat).weight, 0.0);

        let bold = PortfolioProblem::new(0.05, 0.1, 0.25, 1.0, (0.0, 1.0)).unwrap();
        let k = kelly_weight(&bold);
        assert!((k.weight - 0.80).abs() < 1e-12);
        assert!((cara_normal_argmax(&bold, 1e-9).unwrap() - 0.80).abs() < 1e-6);

        let lev = PortfolioProblem::new(0.0, 0.2, 0.1, 1.0, (0.0, 1.0)).unwrap();
        let k = kelly_weight(&lev);
        assert!(k.clamped);
        assert_eq!(k.weight, 1.0);
    }

    #[test]
    fn closed_form_argmax_is_kelly() {
        let w = cara_normal_argmax(&paper(), 1e-9).unwrap();
        assert!((w - 0.40).abs() < 1e-6, "{w}");
    }

    #[test]
    fn outside_domain_rejected() {
        assert!(cara_normal_eu(1.2, &paper()).is_err());
    }

    #[test]
    fn eu_is_strictly_concave_on_grid() {
        let p = paper();
        let v: Vec<f64> = (0..=100)
            .map(|i| cara_normal_eu(i as f64 / 100.0, &p).unwrap())
            .collect();
        for w in v.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] < 0.0);
        }
    }
}
