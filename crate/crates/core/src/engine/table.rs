use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::models::{
    simulate_pairs_with, simulate_portfolio_table_with, Model, PortfolioProblem, RandomSource,
    UtilitySpec,
};

/// Header of the training-table CSV format.
pub const TABLE_HEADER: [&str; 5] = ["theta", "summary", "decision", "utility", "tau"];

/// Substream of the table's random source reserved for the tau column.
const TAU_SUBSTREAM: u64 = 1 << 48;

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub theta: Option<f64>,
    pub summary: Vec<f64>,
    pub decision: Option<f64>,
    pub utility: Option<f64>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub n: usize,
    pub seed: u64,
    pub sorted_pairing: bool,
}

/// The supervised dataset `(theta, S(y), d, U, tau)`. Every row carries the
/// same set of columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTable {
    rows: Vec<TableRow>,
    provenance: Provenance,
}

impl TrainingTable {
    pub fn new(rows: Vec<TableRow>, provenance: Provenance) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::data("training table has no rows"))?;
        let shape = (
            first.theta.is_some(),
            first.summary.len(),
            first.decision.is_some(),
            first.utility.is_some(),
        );
        for (i, r) in rows.iter().enumerate() {
            let this = (r.theta.is_some(), r.summary.len(), r.decision.is_some(), r.utility.is_some());
            if this != shape {
                return Err(Error::data(format!("row {i} has a different column layout from row 0")));
            }
            if !(r.tau > 0.0 && r.tau < 1.0) {
                return Err(Error::data(format!("row {i}: tau {} outside (0,1)", r.tau)));
            }
            let values = r.theta.iter().chain(&r.summary).chain(&r.decision).chain(&r.utility);
            if values.clone().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("row {i} contains non-finite values")));
            }
        }
        Ok(Self { rows, provenance })
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn has_theta(&self) -> bool {
        self.rows[0].theta.is_some()
    }

    pub fn has_decision(&self) -> bool {
        self.rows[0].decision.is_some()
    }

    pub fn has_utility(&self) -> bool {
        self.rows[0].utility.is_some()
    }

    pub fn summary_dim(&self) -> usize {
        self.rows[0].summary.len()
    }

    /// Writes the table as CSV with 17 significant digits per float.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TABLE_HEADER).map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        for r in &self.rows {
            let summary = r.summary.iter().map(|&v| fmt_float(v)).collect::<Vec<_>>().join(";");
            w.write_record([opt(r.theta), summary, opt(r.decision), opt(r.utility), fmt_float(r.tau)])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::data(e.to_string()))
    }

    /// Parses the CSV format written by [`TrainingTable::write_csv`].
    pub fn read_csv<R: Read>(input: R, provenance: Provenance) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rd.headers().map_err(csv_err)?.clone();
        if header.iter().collect::<Vec<_>>() != TABLE_HEADER {
            return Err(Error::data(format!(
                "bad header {:?}, expected {}",
                header.iter().collect::<Vec<_>>(),
                TABLE_HEADER.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            let field = |c: usize| -> Result<Option<f64>> {
                let s = rec.get(c).unwrap_or("").trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>().map(Some).map_err(|_| {
                    Error::data(format!("line {line}, column {}: cannot parse {s:?}", TABLE_HEADER[c]))
                })
            };
            let summary_text = rec.get(1).unwrap_or("").trim();
            let summary = if summary_text.is_empty() {
                Vec::new()
            } else {
                summary_text
                    .split(';')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            Error::data(format!("line {line}, column summary: cannot parse {s:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let tau = field(4)?.ok_or_else(|| Error::data(format!("line {line}, column tau: missing")))?;
            rows.push(TableRow {
                theta: field(0)?,
                summary,
                decision: field(2)?,
                utility: field(3)?,
                tau,
            });
        }
        Self::new(rows, provenance)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::data(e.to_string())
}

/// Float text with 17 significant digits, enough for an exact round trip.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Simulation settings shared by the table builders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    pub n: usize,
    pub sorted_pairing: bool,
    pub exec: ExecMode,
}

/// Simulates `n` rows of `(theta, S(y))`, optionally with a decision cycled
/// over `decisions` and the utility `U(d, theta)`, then appends `tau ~ U(0,1)`.
///
/// With sorted pairing the taus inside each conditioning cell (equal summary
/// and decision) are permuted so their ranks match the ranks of the target:
/// the utility when present, otherwise theta.
pub fn build_training_table<M: Model + ?Sized>(
    model: &M,
    utility: Option<(&UtilitySpec, &[f64])>,
    options: TableOptions,
    rng: &RandomSource,
) -> Result<TrainingTable> {
    if let Some((_, grid)) = utility {
        if grid.is_empty() {
            return Err(Error::arg("a utility needs a nonempty decision grid"));
        }
    }
    let pairs = simulate_pairs_with(model, options.n, rng, options.exec)?;
    let mut rows = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.into_iter().enumerate() {
        let summary = model.summary(&pair.y);
        let (decision, util) = match utility {
            Some((u, grid)) => {
                let d = grid[i % grid.len()];
                let v = u.evaluate(d, pair.theta);
                if !v.is_finite() {
                    return Err(Error::Simulation {
                        index: i,
                        reason: format!("utility is not finite at d={d}"),
                    });
                }
                (Some(d), Some(v))
            }
            None => (None, None),
        };
        if summary.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                index: i,
                reason: "non-finite summary".into(),
            });
        }
        rows.push(TableRow {
            theta: Some(pair.theta),
            summary,
            decision,
            utility: util,
            tau: 0.0,
        });
    }
    attach_taus(&mut rows, rng, options.sorted_pairing, None);
    TrainingTable::new(
        rows,
        Provenance {
            model_id: model.id(),
            n: options.n,
            seed: rng.seed(),
            sorted_pairing: options.sorted_pairing,
        },
    )
}

/// Portfolio table: for each weight `draws_per_weight` rows with
/// `theta = R`, decision `omega` and utility `Z = U(W)`; no summary column.
///
/// With sorted pairing the tau values of a cell are the uniforms that
/// generated its returns, rank-matched to the utilities. Since `Z` is
/// increasing in the uniform for `omega >= 0`, every row gets back its own
/// generating uniform: the comonotone coupling that sorting approximates.
pub fn build_portfolio_table(
    problem: &PortfolioProblem,
    grid: &[f64],
    draws_per_weight: usize,
    sorted_pairing: bool,
    rng: &RandomSource,
    exec: ExecMode,
) -> Result<TrainingTable> {
    let draws = simulate_portfolio_table_with(problem, grid, draws_per_weight, rng, exec)?;
    let mut rows: Vec<TableRow> = draws
        .iter()
        .map(|d| TableRow {
            theta: Some(d.ret),
            summary: Vec::new(),
            decision: Some(d.omega),
            utility: Some(d.utility),
            tau: 0.0,
        })
        .collect();
    let pool: Vec<f64> = draws.iter().map(|d| d.uniform).collect();
    attach_taus(&mut rows, rng, sorted_pairing, Some(&pool));
    TrainingTable::new(
        rows,
        Provenance {
            model_id: "portfolio".into(),
            n: draws.len(),
            seed: rng.seed(),
            sorted_pairing,
        },
    )
}

/// Fills the tau column with fresh uniforms, or with `pool` under sorted
/// pairing, then rank-pairs within cells if requested.
fn attach_taus(rows: &mut [TableRow], rng: &RandomSource, sorted_pairing: bool, pool: Option<&[f64]>) {
    match pool {
        Some(pool) if sorted_pairing => {
            for (row, &u) in rows.iter_mut().zip(pool) {
                row.tau = u;
            }
        }
        _ => {
            let mut r = rng.substream(TAU_SUBSTREAM);
            for row in rows.iter_mut() {
                row.tau = r.uniform();
            }
        }
    }
    if !sorted_pairing {
        return;
    }
    let mut cells: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let mut key: Vec<u64> = row.summary.iter().map(|v| v.to_bits()).collect();
        key.push(row.decision.map_or(u64::MAX, f64::to_bits));
        cells.entry(key).or_default().push(i);
    }
    let target = |row: &TableRow| row.utility.or(row.theta).unwrap_or(0.0);
    for idx in cells.values() {
        let mut taus: Vec<f64> = idx.iter().map(|&i| rows[i].tau).collect();
        taus.sort_by(f64::total_cmp);
        let mut by_target = idx.clone();
        // stable sort keeps ties in row order
        by_target.sort_by(|&a, &b| target(&rows[a]).total_cmp(&target(&rows[b])));
        for (&i, &tau) in by_target.iter().zip(&taus) {
            rows[i].tau = tau;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelSpec, NormalNormalModel};

    fn opts(n: usize, sorted_pairing: bool) -> TableOptions {
        TableOptions {
            n,
            sorted_pairing,
            exec: ExecMode::default(),
        }
    }

    fn ranks(v: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k;
        }
        r
    }

    #[test]
    fn single_row_table() {
        let m = NormalNormalModel::new(0.0, 1.0, 1.0, 3).unwrap();
        let t = build_training_table(&m, None, opts(1, false), &RandomSource::new(1)).unwrap();
        assert_eq!(t.len(), 1);
        let tau = t.rows()[0].tau;
        assert!(tau > 0.0 && tau < 1.0);
        assert_eq!(t.provenance().model_id, "normal-normal");
    }

    #[test]
    fn sorted_pairing_in_one_cell_gives_rank_correlation_one() {
        let spec = ModelSpec::new(
            "one-cell",
            |r: &mut RandomSource| r.normal(0.0, 1.0),
            |_, n, _: &mut RandomSource| vec![0.0; n],
            |_: &[f64]| vec![1.0],
            1,
        )
        .unwrap();
        let t = build_training_table(&spec, None, opts(500, true), &RandomSource::new(2)).unwrap();
        let theta: Vec<f64> = t.rows().iter().map(|r| r.theta.unwrap()).collect();
        let tau: Vec<f64> = t.rows().iter().map(|r| r.tau).collect();
        assert_eq!(ranks(&theta), ranks(&tau));
        let unsorted = build_training_table(&spec, None, opts(500, false), &RandomSource::new(2)).unwrap();
        let mut a: Vec<f64> = unsorted.rows().iter().map(|r| r.tau).collect();
        let mut b = tau.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        // pairing permutes taus, it never changes them
        assert_eq!(a, b);
    }

    #[test]
    fn normal_normal_moments_match_prior_predictive() {
        let (mu, a2, s2, n) = (1.0, 4.0, 9.0, 10);
        let m = NormalNormalModel::new(mu, a2, s2, n).unwrap();
        let big_n = 10_000;
        let t = build_training_table(&m, None, opts(big_n, false), &RandomSource::new(3)).unwrap();
        let th: Vec<f64> = t.rows().iter().map(|r| r.theta.unwrap()).collect();
        let yb: Vec<f64> = t.rows().iter().map(|r| r.summary[0]).collect();
        let nn = big_n as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / nn;
        let (mt, my) = (mean(&th), mean(&yb));
        let var_y = a2 + s2 / n as f64;
        assert!((mt - mu).abs() < 3.0 * (a2 / nn).sqrt());
        assert!((my - mu).abs() < 3.0 * (var_y / nn).sqrt());
        let vt = th.iter().map(|v| (v - mt).powi(2)).sum::<f64>() / nn;
        let vy = yb.iter().map(|v| (v - my).powi(2)).sum::<f64>() / nn;
        let cov = th.iter().zip(&yb).map(|(a, b)| (a - mt) * (b - my)).sum::<f64>() / nn;
        // Gaussian sampling variances: Var(s^2) = 2 v^2 / N, Var(cov) = (a2 var_y + a2^2) / N
        assert!((vt - a2).abs() < 3.0 * (2.0 * a2 * a2 / nn).sqrt());
        assert!((vy - var_y).abs() < 3.0 * (2.0 * var_y * var_y / nn).sqrt());
        assert!((cov - a2).abs() < 3.0 * ((a2 * var_y + a2 * a2) / nn).sqrt());
    }

    #[test]
    fn utility_rows_cycle_decisions() {
        let m = NormalNormalModel::new(0.0, 1.0, 1.0, 1).unwrap();
        let u = UtilitySpec::new("sq", (0.0, 1.0), |d, th| -(th - d).powi(2)).unwrap();
        let grid = [0.0, 0.5, 1.0];
        let t = build_training_table(&m, Some((&u, &grid)), opts(9, true), &RandomSource::new(4)).unwrap();
        for (i, r) in t.rows().iter().enumerate() {
            assert_eq!(r.decision, Some(grid[i % 3]));
            assert_eq!(r.utility, Some(u.evaluate(grid[i % 3], r.theta.unwrap())));
        }
        let bad = UtilitySpec::new("nan", (0.0, 1.0), |_, _| f64::NAN).unwrap();
        let err = build_training_table(&m, Some((&bad, &grid)), opts(5, false), &RandomSource::new(4));
        assert!(matches!(err, Err(Error::Simulation { index: 0, .. })));
        assert!(build_training_table(&m, Some((&u, &[])), opts(5, false), &RandomSource::new(4)).is_err());
    }

    #[test]
    fn portfolio_cells_are_rank_paired() {
        let p = PortfolioProblem::new(0.05, 0.1, 0.25, 2.0, (0.0, 1.0)).unwrap();
        let grid = p.weight_grid(5);
        let t = build_portfolio_table(&p, &grid, 200, true, &RandomSource::new(5), ExecMode::default()).unwrap();
        assert_eq!(t.len(), 1000);
        assert_eq!(t.summary_dim(), 0);
        for &w in &grid[1..] {
            let cell: Vec<&TableRow> = t.rows().iter().filter(|r| r.decision == Some(w)).collect();
            let z: Vec<f64> = cell.iter().map(|r| r.utility.unwrap()).collect();
            let tau: Vec<f64> = cell.iter().map(|r| r.tau).collect();
            assert_eq!(ranks(&z), ranks(&tau));
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = NormalNormalModel::new(0.0, 25.0, 100.0, 4).unwrap();
        let u = UtilitySpec::new("lin", (0.0, 1.0), |d, th| d * th + 1.0 / 3.0).unwrap();
        let t = build_training_table(&m, Some((&u, &[0.1, 0.7])), opts(50, false), &RandomSource::new(6)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta,summary,decision,utility,tau\n"));
        let back = TrainingTable::read_csv(&buf[..], t.provenance().clone()).unwrap();
        assert_eq!(back, t);

        let p = PortfolioProblem::new(0.05, 0.1, 0.25, 2.0, (0.0, 1.0)).unwrap();
        let pt = build_portfolio_table(&p, &[0.0, 0.5], 3, false, &RandomSource::new(7), ExecMode::default()).unwrap();
        let mut buf = Vec::new();
        pt.write_csv(&mut buf).unwrap();
        assert_eq!(TrainingTable::read_csv(&buf[..], pt.provenance().clone()).unwrap(), pt);
    }

    #[test]
    fn multi_dimensional_summary_round_trips() {
        let rows = vec![TableRow {
            theta: Some(0.1),
            summary: vec![1.0, -2.5, 1e-300],
            decision: None,
            utility: None,
            tau: 0.25,
        }];
        let prov = Provenance {
            model_id: "m".into(),
            n: 1,
            seed: 0,
            sorted_pairing: false,
        };
        let t = TrainingTable::new(rows, prov.clone()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(TrainingTable::read_csv(&buf[..], prov).unwrap(), t);
    }

    #[test]
    fn malformed_csv_reports_location() {
        let prov = Provenance {
            model_id: "m".into(),
            n: 0,
            seed: 0,
            sorted_pairing: false,
        };
        let text = "theta,summary,decision,utility,tau\n1.0,2.0,,,0.5\n1.0,abc,,,0.5\n";
        let err = TrainingTable::read_csv(text.as_bytes(), prov.clone()).unwrap_err();
        assert!(err.to_string().contains("line 3, column summary"), "{err}");
        let bad_tau = "theta,summary,decision,utility,tau\n1.0,2.0,,,1.5\n";
        assert!(TrainingTable::read_csv(bad_tau.as_bytes(), prov.clone()).is_err());
        let mixed = "theta,summary,decision,utility,tau\n1.0,2.0,,,0.5\n1.0,2.0,0.3,,0.5\n";
        assert!(TrainingTable::read_csv(mixed.as_bytes(), prov.clone()).is_err());
        assert!(TrainingTable::read_csv("a,b\n1,2\n".as_bytes(), prov).is_err());
    }
}
