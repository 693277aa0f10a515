//! Predictive-accuracy metrics and the method comparison harness: average
//! log score (ALS), RMSE of cell counts, root-mean-square Anscombe
//! residuals, each optionally restricted to a pixelated data-driven
//! boundary, plus conversion of continuous densities to expected counts.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::baselines::{bin_events, medic_density, medic_predict, medic_total, CountGrid};
use crate::data::EventStore;
use crate::density::{log_density_at, DensityRaster, GridSpec};
use crate::error::{Error, Result};
use crate::estimation::{predict_period, NormalReference, WeeklyCycle};
use crate::Point;

/// Zero-prediction guard in the Anscombe residual denominator.
pub const ANSCOMBE_EPS: f64 = 1e-4;

/// Boolean mask of 1-km² cells inside the data-driven boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMask {
    grid: GridSpec,
    cells: Vec<bool>,
}

impl BoundaryMask {
    pub fn all_true(grid: GridSpec) -> Self {
        BoundaryMask {
            grid,
            cells: vec![true; grid.n_cells()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn contains_cell(&self, ix: usize, iy: usize) -> bool {
        self.cells[self.grid.index(ix, iy)]
    }

    pub fn n_inside(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }
}

/// Mark every cell holding at least one event from the training periods
/// `[lo, hi]` as inside the boundary.
pub fn derive_boundary(store: &EventStore, lo: u32, hi: u32, grid: GridSpec) -> Result<BoundaryMask> {
    if store.is_empty() {
        return Err(Error::EmptyInput("events for boundary derivation"));
    }
    let counts = bin_events(store.events_between(lo, hi), grid);
    let cells: Vec<bool> = counts.values().iter().map(|&c| c > 0.0).collect();
    if !cells.iter().any(|&b| b) {
        return Err(Error::Validation(
            "no training events fall inside the boundary grid".into(),
        ));
    }
    Ok(BoundaryMask { grid, cells })
}

/// Average log score of one period: the sum over the period's test points
/// of the log predicted density.
pub fn average_log_score(density: &DensityRaster, test_points: &[Point]) -> Result<f64> {
    if test_points.is_empty() {
        return Err(Error::EmptyInput("test points for log score"));
    }
    let logs = log_density_at(density, test_points)?;
    Ok(logs.iter().map(|l| l.log).sum())
}

fn check_geometries(pred: &CountGrid, actual: &CountGrid, mask: Option<&BoundaryMask>) -> Result<()> {
    if pred.grid() != actual.grid() {
        return Err(Error::GeometryMismatch(
            "prediction and actual grids differ".into(),
        ));
    }
    if let Some(m) = mask {
        if m.grid() != pred.grid() {
            return Err(Error::GeometryMismatch("mask grid differs".into()));
        }
    }
    Ok(())
}

/// Root-mean-square per-cell count error over all cells, or over the
/// mask-true cells when a boundary is given.
pub fn rmse(pred: &CountGrid, actual: &CountGrid, mask: Option<&BoundaryMask>) -> Result<f64> {
    check_geometries(pred, actual, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (p, a)) in pred.values().iter().zip(actual.values().iter()).enumerate() {
        if mask.map_or(true, |m| m.cells()[i]) {
            let d = a - p;
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Validation("mask selects no cells".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// Root-mean-square Anscombe residual, (3/2)(y^{2/3} − ŷ^{2/3}) / ŷ^{1/6},
/// with the zero-prediction guard max(ŷ, ε) applied in the denominator so
/// exact predictions score zero.
pub fn anscombe_rmse(pred: &CountGrid, actual: &CountGrid, mask: Option<&BoundaryMask>) -> Result<f64> {
    check_geometries(pred, actual, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (p, a)) in pred.values().iter().zip(actual.values().iter()).enumerate() {
        if mask.map_or(true, |m| m.cells()[i]) {
            let r = 1.5 * (a.powf(2.0 / 3.0) - p.powf(2.0 / 3.0)) / p.max(ANSCOMBE_EPS).powf(1.0 / 6.0);
            sum += r * r;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Validation("mask selects no cells".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// Convert a normalized density to expected counts per (coarser) count
/// cell: count = total · density mass integrated over the cell.
pub fn density_to_counts(
    density: &DensityRaster,
    total: f64,
    count_grid: GridSpec,
) -> Result<CountGrid> {
    if !density.is_normalized() {
        return Err(Error::Validation(
            "density_to_counts requires a normalized density".into(),
        ));
    }
    if !(total >= 0.0) || !total.is_finite() {
        return Err(Error::Validation(format!("invalid total count {total}")));
    }
    let fine = density.grid();
    let ratio_f = count_grid.cell_km / fine.cell_km;
    let ratio = ratio_f.round() as usize;
    let aligned = (ratio_f - ratio as f64).abs() < 1e-9
        && ratio >= 1
        && (fine.origin_x - count_grid.origin_x).abs() < 1e-9
        && (fine.origin_y - count_grid.origin_y).abs() < 1e-9
        && fine.width == count_grid.width * ratio
        && fine.height == count_grid.height * ratio;
    if !aligned {
        return Err(Error::GeometryMismatch(
            "count grid is not an aligned coarsening of the density grid".into(),
        ));
    }
    let fine_area = fine.cell_area();
    let mut values = vec![0.0; count_grid.n_cells()];
    for cy in 0..count_grid.height {
        for cx in 0..count_grid.width {
            let mut mass = 0.0;
            for sy in 0..ratio {
                for sx in 0..ratio {
                    mass += density.value(cx * ratio + sx, cy * ratio + sy);
                }
            }
            values[count_grid.index(cx, cy)] = total * mass * fine_area;
        }
    }
    CountGrid::from_values(count_grid, values)
}

/// A prediction method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Medic,
    Kde,
    Warp,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Medic => "medic",
            Method::Kde => "kde",
            Method::Warp => "warp",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',') {
            let m = match part.trim() {
                "medic" => Method::Medic,
                "kde" => Method::Kde,
                "warp" => Method::Warp,
                other => {
                    return Err(Error::Validation(format!(
                        "unknown method `{other}` (expected medic, kde, warp)"
                    )))
                }
            };
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Validation("empty method list".into()));
        }
        Ok(out)
    }
}

/// Per-period metric values of one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodMetrics {
    /// None when the period had no test events.
    pub als: Option<f64>,
    pub rmse: f64,
    pub rmse_b: f64,
    pub ansc: f64,
    pub ansc_b: f64,
}

/// Per-period and aggregate metrics of one method over the test range.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub method: Method,
    pub periods: Vec<u32>,
    pub metrics: Vec<PeriodMetrics>,
}

impl MetricReport {
    pub fn mean_als(&self) -> Option<f64> {
        let vals: Vec<f64> = self.metrics.iter().filter_map(|m| m.als).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    fn mean_of(&self, f: impl Fn(&PeriodMetrics) -> f64) -> f64 {
        if self.metrics.is_empty() {
            return f64::NAN;
        }
        self.metrics.iter().map(f).sum::<f64>() / self.metrics.len() as f64
    }

    pub fn mean_rmse(&self) -> f64 {
        self.mean_of(|m| m.rmse)
    }

    pub fn mean_rmse_b(&self) -> f64 {
        self.mean_of(|m| m.rmse_b)
    }

    pub fn mean_ansc(&self) -> f64 {
        self.mean_of(|m| m.ansc)
    }

    pub fn mean_ansc_b(&self) -> f64 {
        self.mean_of(|m| m.ansc_b)
    }

    /// CSV export: one row per period.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period,als,rmse,rmse_b,ansc,ansc_b\n");
        for (u, m) in self.periods.iter().zip(self.metrics.iter()) {
            let als = m.als.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{u},{als},{},{},{},{}", m.rmse, m.rmse_b, m.ansc, m.ansc_b);
        }
        out
    }
}

/// The full comparison outcome: one report per method over the same
/// periods, plus the boundary and any skipped periods.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub reports: Vec<MetricReport>,
    pub boundary: BoundaryMask,
    /// Periods excluded (symmetrically, for all methods) with the reason.
    pub skipped: Vec<(u32, String)>,
}

impl Comparison {
    pub fn report_for(&self, method: Method) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.method == method)
    }

    /// Plain-text summary of mean metrics, one row per method.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>12} {:>10} {:>10} {:>10} {:>10}",
            "method", "ALS", "RMSE", "RMSE_B", "ANSC", "ANSC_B"
        );
        for r in &self.reports {
            let als = r
                .mean_als()
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<8} {:>12} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                r.method.label(),
                als,
                r.mean_rmse(),
                r.mean_rmse_b(),
                r.mean_ansc(),
                r.mean_ansc_b()
            );
        }
        out
    }
}

/// Run every method over every test period: predict, convert continuous
/// densities to counts using the MEDIC total, and score all five metrics.
/// Periods where any method fails are recorded and excluded from all
/// methods' means symmetrically.
pub fn run_comparison(
    store: &EventStore,
    cycle: &WeeklyCycle,
    test_periods: &[u32],
    methods: &[Method],
) -> Result<Comparison> {
    if test_periods.is_empty() {
        return Err(Error::Validation("no test periods given".into()));
    }
    if methods.is_empty() {
        return Err(Error::Validation("no methods given".into()));
    }
    let count_grid = cycle.count_grid()?;
    let first_test = *test_periods.iter().min().unwrap();
    if first_test <= 1 {
        return Err(Error::Validation("test periods must leave a training window".into()));
    }
    let boundary = derive_boundary(store, 1, first_test - 1, count_grid)?;

    type PeriodOutcome = std::result::Result<Vec<PeriodMetrics>, String>;
    let outcomes: Vec<(u32, PeriodOutcome)> = test_periods
        .par_iter()
        .map(|&u| {
            let run = || -> Result<Vec<PeriodMetrics>> {
                let test_events = store.events_at(u);
                let test_points: Vec<Point> =
                    test_events.iter().map(|e| e.location).collect();
                let actual = bin_events(test_events, count_grid);
                let medic_grid = medic_predict(store, u, cycle.m_weeks, count_grid)?;
                let total = medic_total(&medic_grid);
                let mut per_method = Vec::with_capacity(methods.len());
                for method in methods {
                    let (density, counts) = match method {
                        Method::Medic => {
                            let d = medic_density(&medic_grid)?;
                            (d, medic_grid.clone())
                        }
                        Method::Kde => {
                            let pred = crate::baselines::unwarped_kde_predict(
                                store,
                                u,
                                cycle.m_weeks,
                                &NormalReference,
                                cycle.fine_grid,
                            )?;
                            let counts = density_to_counts(&pred.raster, total, count_grid)?;
                            (pred.raster, counts)
                        }
                        Method::Warp => {
                            let pred = predict_period(store, u, cycle)?;
                            let counts = density_to_counts(&pred.raster, total, count_grid)?;
                            (pred.raster, counts)
                        }
                    };
                    let als = if test_points.is_empty() {
                        None
                    } else {
                        Some(average_log_score(&density, &test_points)?)
                    };
                    per_method.push(PeriodMetrics {
                        als,
                        rmse: rmse(&counts, &actual, None)?,
                        rmse_b: rmse(&counts, &actual, Some(&boundary))?,
                        ansc: anscombe_rmse(&counts, &actual, None)?,
                        ansc_b: anscombe_rmse(&counts, &actual, Some(&boundary))?,
                    });
                }
                Ok(per_method)
            };
            (u, run().map_err(|e| e.to_string()))
        })
        .collect();

    let mut reports: Vec<MetricReport> = methods
        .iter()
        .map(|&method| MetricReport {
            method,
            periods: Vec::new(),
            metrics: Vec::new(),
        })
        .collect();
    let mut skipped = Vec::new();
    for (u, outcome) in outcomes {
        match outcome {
            Ok(per_method) => {
                for (report, m) in reports.iter_mut().zip(per_method.into_iter()) {
                    report.periods.push(u);
                    report.metrics.push(m);
                }
            }
            Err(reason) => skipped.push((u, reason)),
        }
    }
    Ok(Comparison {
        reports,
        boundary,
        skipped,
    })
}

/// One-sided paired sign test outcome.
#[derive(Debug, Clone, Copy)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// P(X ≥ wins | n = wins + losses, p = ½): the probability of at least
    /// this many wins under the no-difference null.
    pub p_value: f64,
}

/// Paired sign test on per-period differences (positive = win). Ties are
/// dropped, following the standard treatment.
pub fn paired_sign_test(diffs: &[f64]) -> SignTest {
    let wins = diffs.iter().filter(|&&d| d > 0.0).count();
    let losses = diffs.iter().filter(|&&d| d < 0.0).count();
    let ties = diffs.len() - wins - losses;
    let n = wins + losses;
    if n == 0 {
        return SignTest {
            wins,
            losses,
            ties,
            p_value: 1.0,
        };
    }
    // Binomial upper tail in log space.
    let ln2 = std::f64::consts::LN_2;
    let mut p = 0.0;
    let mut ln_c = 0.0; // ln C(n, k), starting at k = 0
    for k in 0..=n {
        if k >= wins {
            p += (ln_c - n as f64 * ln2).exp();
        }
        if k < n {
            ln_c += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
        }
    }
    SignTest {
        wins,
        losses,
        ties,
        p_value: p.min(1.0),
    }
}
