use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SimulatedPair;
use crate::error::{Error, Result};

/// Arithmetic mean, the sufficient statistic of the normal-normal model.
pub fn summary_mean(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::arg("summary of empty data"));
    }
    Ok(y.iter().sum::<f64>() / y.len() as f64)
}

/// A learned linear summary `S(y) = intercept + coefficients . y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSummary {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Standard errors for `[intercept, coefficients...]`.
    pub standard_errors: Vec<f64>,
    pub residual_variance: f64,
}

impl LinearSummary {
    pub fn apply(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.coefficients.len() {
            return Err(Error::Shape {
                expected: self.coefficients.len(),
                got: y.len(),
            });
        }
        Ok(self.intercept + self.coefficients.iter().zip(y).map(|(b, v)| b * v).sum::<f64>())
    }
}

/// Least-squares regression of theta on y (with intercept).
pub fn learn_summary_ols(pairs: &[SimulatedPair]) -> Result<LinearSummary> {
    let Some(first) = pairs.first() else {
        return Err(Error::SingularDesign("no rows".into()));
    };
    let p = first.y.len() + 1;
    let n = pairs.len();
    if n < p {
        return Err(Error::SingularDesign(format!("{n} rows for {p} columns")));
    }
    if pairs.iter().any(|r| r.y.len() + 1 != p) {
        return Err(Error::data("rows have differing observation lengths"));
    }
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { pairs[i].y[j - 1] });
    let t = DVector::from_iterator(n, pairs.iter().map(|r| r.theta));

    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if (0..p).any(|j| r[(j, j)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularDesign("design matrix is rank deficient".into()));
    }
    let qt_y = qr.q().transpose() * &t;
    let beta = r
        .solve_upper_triangular(&qt_y)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;

    let resid = &t - &x * &beta;
    let dof = n.saturating_sub(p);
    let residual_variance = if dof > 0 {
        resid.norm_squared() / dof as f64
    } else {
        0.0
    };
    // (X'X)^{-1} = R^{-1} R^{-T}
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularDesign("R not invertible".into()))?;
    let cov = &r_inv * r_inv.transpose() * residual_variance;
    let standard_errors = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();

    Ok(LinearSummary {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        standard_errors,
        residual_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::RandomSource;

    #[test]
    fn mean_examples() {
        assert_eq!(summary_mean(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(summary_mean(&[4.25; 7]).unwrap(), 4.25);
        assert!(summary_mean(&[]).is_err());
    }

    #[test]
    fn sample_mean_concentrates() {
        let mut r = RandomSource::new(21);
        let y: Vec<f64> = (0..100).map(|_| r.normal(3.0, 2.0)).collect();
        let m = summary_mean(&y).unwrap();
        assert!((m - 3.0).abs() < 3.0 * 2.0 / 10.0, "{m}");
    }

    #[test]
    fn recovers_equal_weight_mean() {
        let mut r = RandomSource::new(8);
        let pairs: Vec<SimulatedPair> = (0..200)
            .map(|_| {
                let y: Vec<f64> = (0..5).map(|_| r.normal(0.0, 1.0)).collect();
                SimulatedPair {
                    theta: y.iter().sum::<f64>() / 5.0,
                    y,
                }
            })
            .collect();
        let s = learn_summary_ols(&pairs).unwrap();
        assert!(s.intercept.abs() < 1e-8);
        for b in &s.coefficients {
            assert!((b - 0.2).abs() < 1e-8, "{b}");
        }
        assert!((s.apply(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap() - 3.0).abs() < 1e-8);
    }

    #[test]
    fn independent_target_gives_null_coefficients() {
        let mut r = RandomSource::new(13);
        let pairs: Vec<SimulatedPair> = (0..2000)
            .map(|_| SimulatedPair {
                theta: r.normal(0.0, 1.0),
                y: (0..3).map(|_| r.normal(0.0, 1.0)).collect(),
            })
            .collect();
        let s = learn_summary_ols(&pairs).unwrap();
        for (b, se) in s.coefficients.iter().zip(&s.standard_errors[1..]) {
            assert!(b.abs() < 3.0 * se, "b={b} se={se}");
        }
    }

    #[test]
    fn too_few_rows_is_singular() {
        let pairs = vec![
            SimulatedPair { theta: 1.0, y: vec![1.0, 2.0, 3.0] },
            SimulatedPair { theta: 2.0, y: vec![2.0, 1.0, 0.0] },
        ];
        assert!(matches!(learn_summary_ols(&pairs), Err(Error::SingularDesign(_))));
        let collinear: Vec<SimulatedPair> = (0..10)
            .map(|i| SimulatedPair { theta: i as f64, y: vec![i as f64, 2.0 * i as f64] })
            .collect();
        assert!(matches!(learn_summary_ols(&collinear), Err(Error::SingularDesign(_))));
    }
}
