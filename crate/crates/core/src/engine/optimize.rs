use std::io::Write;

use serde::{Deserialize, Serialize};

use super::quantile::{expected_utility, EuScheme, NetSection, QuantileSource};
use super::table::fmt_float;
use crate::analytic::golden_section_max;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::models::RandomSource;
use crate::net::QuantileNet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub grid_size: usize,
    pub refine: bool,
    /// Bracket width at which golden-section refinement stops.
    pub tolerance: f64,
    #[serde(default)]
    pub exec: ExecMode,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            grid_size: 101,
            refine: true,
            tolerance: 1e-6,
            exec: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub d: f64,
    pub eu: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_decision: f64,
    pub best_eu: f64,
    pub curve: Vec<CurvePoint>,
    /// Evaluations made by the refinement, in order.
    pub refinement: Vec<CurvePoint>,
    pub ties_detected: bool,
    pub config: OptimizeOptions,
    pub seed: Option<u64>,
}

impl OptimizationResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The grid curve as CSV `d,eu,se`.
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::data(e.to_string());
        w.write_record(["d", "eu", "se"]).map_err(err)?;
        for p in &self.curve {
            w.write_record([fmt_float(p.d), fmt_float(p.eu), fmt_float(p.se)]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::data(e.to_string()))
    }
}

fn uniform_grid(domain: (f64, f64), n: usize) -> Vec<f64> {
    let (lo, hi) = domain;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Grid search of `eval(d) -> (eu, se)` over `domain`, then optional
/// golden-section refinement inside the neighbours of the best grid point.
///
/// Ties on the grid go to the smallest decision and are flagged.
pub fn optimize_decision<F>(eval: F, domain: (f64, f64), options: &OptimizeOptions) -> Result<OptimizationResult>
where
    F: Fn(f64) -> Result<(f64, f64)> + Sync + Send,
{
    let (lo, hi) = domain;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::arg(format!("decision domain {domain:?} must be a finite interval")));
    }
    if options.grid_size < 2 {
        return Err(Error::arg("grid_size must be at least 2"));
    }
    let wrap = |d: f64| {
        eval(d).map_err(|e| Error::Evaluation {
            decision: d,
            source: Box::new(e),
        })
    };
    let grid = uniform_grid(domain, options.grid_size);
    let values = exec::map_indexed(options.exec, grid.len(), |i| wrap(grid[i]));
    let mut curve = Vec::with_capacity(grid.len());
    for (&d, v) in grid.iter().zip(values) {
        let (eu, se) = v?;
        if !eu.is_finite() {
            return Err(Error::Evaluation {
                decision: d,
                source: Box::new(Error::numeric("non-finite expected utility")),
            });
        }
        curve.push(CurvePoint { d, eu, se });
    }

    let mut best = 0;
    for (i, p) in curve.iter().enumerate() {
        if p.eu > curve[best].eu {
            best = i;
        }
    }
    let top = curve[best].eu;
    let tie_tol = 1e-12 * top.abs().max(1.0);
    let ties_detected = curve
        .iter()
        .enumerate()
        .any(|(i, p)| i != best && (p.eu - top).abs() <= tie_tol);

    let mut best_decision = curve[best].d;
    let mut best_eu = top;
    let mut refinement = Vec::new();
    if options.refine && !ties_detected {
        let a = curve[best.saturating_sub(1)].d;
        let b = curve[(best + 1).min(curve.len() - 1)].d;
        let (x, fx) = golden_section_max(
            |d| {
                let (eu, se) = wrap(d)?;
                refinement.push(CurvePoint { d, eu, se });
                Ok(eu)
            },
            a,
            b,
            options.tolerance,
        )?;
        if fx > best_eu {
            best_decision = x;
            best_eu = fx;
        }
    }

    Ok(OptimizationResult {
        best_decision,
        best_eu,
        curve,
        refinement,
        ties_detected,
        config: *options,
        seed: None,
    })
}

/// EU evaluator over a quantile source indexed by the decision. Every call
/// reuses the same levels (common random numbers under the random scheme).
pub fn eu_evaluator<'a, S, B>(build: B, m: usize, scheme: EuScheme, seed: u64) -> impl Fn(f64) -> Result<(f64, f64)> + Sync + Send + 'a
where
    S: QuantileSource + 'a,
    B: Fn(f64) -> S + Sync + Send + 'a,
{
    move |d| {
        let mut rng = RandomSource::new(seed);
        let e = expected_utility(&build(d), m, scheme, &mut rng)?;
        Ok((e.estimate, e.standard_error))
    }
}

/// Maximizes `E[Z_d] = int G(d, tau) dtau` for a utility-quantile net `G`.
pub fn optimize_utility_net(
    net: &QuantileNet,
    domain: (f64, f64),
    m: usize,
    scheme: EuScheme,
    seed: u64,
    options: &OptimizeOptions,
) -> Result<OptimizationResult> {
    if net.feature_dim() != 1 {
        return Err(Error::Shape {
            expected: 1,
            got: net.feature_dim(),
        });
    }
    let eval = move |d: f64| {
        let features = [d];
        let mut rng = RandomSource::new(seed);
        let e = expected_utility(&NetSection { net, features: &features }, m, scheme, &mut rng)?;
        Ok((e.estimate, e.standard_error))
    };
    let mut r = optimize_decision(eval, domain, options)?;
    r.seed = Some(seed);
    Ok(r)
}
