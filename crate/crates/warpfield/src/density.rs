//! Rasterized density estimation: the unwarped KDE, the warped KDE, raster
//! normalization, and log-density lookup.
//!
//! Densities are evaluated on a regular grid of cell centers (midpoint
//! rule). Warped-kernel rasters can be pointwise negative before clamping;
//! negatives are clamped to zero and the raster is renormalized so that it
//! integrates to one.
//!
//! Raster fills walk each kernel row by row with a multiplicative
//! recurrence (a Gaussian restricted to an evenly spaced row needs just two
//! exponentials), which keeps dense grids cheap. Contributions smaller than
//! exp(−46) of the kernel peak are dropped.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::Event;
use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, LaplacianContext, EXP_ARG_CUTOFF};
use crate::Point;

/// Density floor (per km²) applied before taking logs, keeping scores finite
/// for test points in zero-density cells.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// A regular grid of square cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_km: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_km: f64, width: usize, height: usize) -> Result<Self> {
        if !(cell_km > 0.0) || !cell_km.is_finite() {
            return Err(Error::Validation("grid cell size must be positive".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::Validation("grid must have at least one cell".into()));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(Error::Validation("grid origin must be finite".into()));
        }
        Ok(GridSpec {
            origin_x,
            origin_y,
            cell_km,
            width,
            height,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_km * self.cell_km
    }

    pub fn center(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.origin_x + (ix as f64 + 0.5) * self.cell_km,
            self.origin_y + (iy as f64 + 0.5) * self.cell_km,
        )
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    pub fn max_x(&self) -> f64 {
        self.origin_x + self.width as f64 * self.cell_km
    }

    pub fn max_y(&self) -> f64 {
        self.origin_y + self.height as f64 * self.cell_km
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.origin_x && p.x <= self.max_x() && p.y >= self.origin_y && p.y <= self.max_y()
    }

    /// Cell containing a point, or None when outside. Points exactly on the
    /// far edges belong to no cell.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin_x) / self.cell_km;
        let fy = (p.y - self.origin_y) / self.cell_km;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let ix = fx as usize;
        let iy = fy as usize;
        if ix >= self.width || iy >= self.height {
            return None;
        }
        Some((ix, iy))
    }
}

/// A gridded density (per km²); when normalized it integrates to one under
/// the midpoint rule.
#[derive(Debug, Clone)]
pub struct DensityRaster {
    grid: GridSpec,
    values: Vec<f64>,
    normalized: bool,
}

impl DensityRaster {
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GeometryMismatch(format!(
                "raster has {} values for a {}x{} grid",
                values.len(),
                grid.width,
                grid.height
            )));
        }
        Ok(DensityRaster {
            grid,
            values,
            normalized: false,
        })
    }

    /// Uniform normalized density over the grid.
    pub fn uniform(grid: GridSpec) -> Self {
        let v = 1.0 / (grid.n_cells() as f64 * grid.cell_area());
        DensityRaster {
            grid,
            values: vec![v; grid.n_cells()],
            normalized: true,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Midpoint-rule integral, Σ values · cell area.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Scale so the raster integrates to one. Idempotent: a raster already
    /// flagged normalized is returned untouched.
    pub fn normalize(&mut self) -> Result<()> {
        if self.normalized {
            return Ok(());
        }
        let total = self.integral();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateDensity(format!(
                "raster integral is {total}; cannot normalize"
            )));
        }
        for v in self.values.iter_mut() {
            *v /= total;
        }
        self.normalized = true;
        Ok(())
    }

    /// Clamp negative cells to zero, returning how many were clamped.
    pub fn clamp_negative(&mut self) -> usize {
        let mut n = 0;
        for v in self.values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                n += 1;
            }
        }
        n
    }
}

/// Unwarped KDE prediction at one point: the equal-weight average of
/// Gaussian kernels over the labeled events.
pub fn kde_predict(labeled: &[Event], h: &Bandwidth, x: Point) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::EmptyInput("labeled events for KDE"));
    }
    let sum: f64 = labeled.iter().map(|e| h.eval(x, e.location)).sum();
    Ok(sum / labeled.len() as f64)
}

/// Accumulate Σ w_i · k(cell center, c_i) into `out`, row-parallel.
///
/// Within each grid row a Gaussian has log-quadratic cell-to-cell steps, so
/// the row is filled with two exponentials and one multiply per cell. Cells
/// with quadratic form beyond the truncation cutoff are skipped.
fn accumulate_weighted_kernels(
    grid: &GridSpec,
    centers: &[(Point, f64)],
    h: &Bandwidth,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), grid.n_cells());
    let (a, b, c) = h.inv_entries();
    let peak = h.peak();
    let cell = grid.cell_km;
    let rho = (-a * cell * cell).exp();
    let qmax = 2.0 * EXP_ARG_CUTOFF;
    // Minimum of q over dx at fixed dy is (c − b²/a)·dy².
    let dy_max = (qmax / (c - b * b / a)).sqrt();
    let width = grid.width;
    let (ox, oy) = (grid.origin_x, grid.origin_y);

    out.par_chunks_mut(width).enumerate().for_each(|(iy, row)| {
        let y = oy + (iy as f64 + 0.5) * cell;
        for &(s, wgt) in centers {
            let dy = y - s.y;
            if dy.abs() > dy_max || wgt == 0.0 {
                continue;
            }
            // Solve a·dx² + 2b·dy·dx + c·dy² ≤ qmax for dx.
            let disc = (b * dy) * (b * dy) - a * (c * dy * dy - qmax);
            if disc <= 0.0 {
                continue;
            }
            let half = disc.sqrt() / a;
            let mid = -b * dy / a;
            let x_lo = s.x + mid - half;
            let x_hi = s.x + mid + half;
            let lo_f = ((x_lo - ox) / cell - 0.5).ceil();
            let hi_f = ((x_hi - ox) / cell - 0.5).floor();
            if hi_f < 0.0 || lo_f > (width - 1) as f64 || hi_f < lo_f {
                continue;
            }
            let ix_lo = lo_f.max(0.0) as usize;
            let ix_hi = (hi_f as usize).min(width - 1);
            if ix_lo > ix_hi {
                continue;
            }
            let u0 = ox + (ix_lo as f64 + 0.5) * cell - s.x;
            let mut f = (-0.5 * (a * u0 * u0 + 2.0 * b * u0 * dy + c * dy * dy)).exp();
            let mut g = (-(a * cell * u0 + 0.5 * a * cell * cell + b * cell * dy)).exp();
            let wp = wgt * peak;
            for v in &mut row[ix_lo..=ix_hi] {
                *v += wp * f;
                f *= g;
                g *= rho;
            }
        }
    });
}

/// Raw (unnormalized) KDE values at every cell center: (1/n)Σ k(x, s_i).
pub fn kde_raw_values(labeled: &[Event], h: &Bandwidth, grid: &GridSpec) -> Result<Vec<f64>> {
    if labeled.is_empty() {
        return Err(Error::EmptyInput("labeled events for KDE raster"));
    }
    let centers: Vec<(Point, f64)> = labeled.iter().map(|e| (e.location, 1.0)).collect();
    let mut out = vec![0.0; grid.n_cells()];
    accumulate_weighted_kernels(grid, &centers, h, &mut out);
    let inv_n = 1.0 / labeled.len() as f64;
    for v in out.iter_mut() {
        *v *= inv_n;
    }
    Ok(out)
}

/// Normalized unwarped-KDE raster.
pub fn kde_raster(labeled: &[Event], h: &Bandwidth, grid: &GridSpec) -> Result<DensityRaster> {
    let mut raster = DensityRaster::from_values(*grid, kde_raw_values(labeled, h, grid)?)?;
    raster.normalize()?;
    Ok(raster)
}

/// Raw warped-KDE values before clamping and normalization:
/// (1/n)Σ_s k̃(x, s) = (1/n)Σ_s k(x, s) − k_xᵀ·W·m̄ with m̄ the mean kernel
/// vector of the labeled events against the cloud. May contain negatives.
///
/// The grid must cover every labeled point; callers are expected to leave a
/// margin of at least three bandwidth standard deviations so the integral
/// is meaningful.
pub fn warped_raw_values(
    labeled: &[Event],
    ctx: &LaplacianContext,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    if labeled.is_empty() {
        return Err(Error::EmptyInput("labeled events for warped raster"));
    }
    for e in labeled {
        if !grid.contains(e.location) {
            return Err(Error::Validation(format!(
                "labeled point ({}, {}) lies outside the raster grid",
                e.location.x, e.location.y
            )));
        }
    }
    let h = *ctx.bandwidth();
    let mut out = kde_raw_values(labeled, &h, grid)?;
    if ctx.lambda() > 0.0 {
        let sources: Vec<Point> = labeled.iter().map(|e| e.location).collect();
        let mean_k = ctx.mean_kernel_vector(&sources);
        let v = ctx.warp_apply(&mean_k);
        let centers: Vec<(Point, f64)> = ctx
            .cloud()
            .iter()
            .zip(v.iter())
            .map(|(&z, &vi)| (z, -vi))
            .collect();
        accumulate_weighted_kernels(grid, &centers, &h, &mut out);
    }
    Ok(out)
}

/// Warped-KDE raster: raw values, negatives clamped to zero, renormalized.
pub fn warped_raster(
    labeled: &[Event],
    ctx: &LaplacianContext,
    grid: &GridSpec,
) -> Result<DensityRaster> {
    let mut raster = DensityRaster::from_values(*grid, warped_raw_values(labeled, ctx, grid)?)?;
    raster.clamp_negative();
    raster.normalize()?;
    Ok(raster)
}

/// A log-density lookup result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    pub log: f64,
    /// The point fell outside the raster extent and was floored.
    pub outside: bool,
}

/// Log of the bilinearly interpolated density at each point, floored at
/// [`DENSITY_FLOOR`]. Points outside the raster extent are floored and
/// flagged.
pub fn log_density_at(raster: &DensityRaster, points: &[Point]) -> Result<Vec<LogDensity>> {
    if !raster.is_normalized() {
        return Err(Error::Validation(
            "log_density_at requires a normalized raster".into(),
        ));
    }
    let grid = raster.grid();
    let w = grid.width;
    let hgt = grid.height;
    let mut out = Vec::with_capacity(points.len());
    for &p in points {
        if !grid.contains(p) {
            out.push(LogDensity {
                log: DENSITY_FLOOR.ln(),
                outside: true,
            });
            continue;
        }
        let gx = ((p.x - grid.origin_x) / grid.cell_km - 0.5).clamp(0.0, (w - 1) as f64);
        let gy = ((p.y - grid.origin_y) / grid.cell_km - 0.5).clamp(0.0, (hgt - 1) as f64);
        let i0 = (gx as usize).min(w.saturating_sub(2));
        let j0 = (gy as usize).min(hgt.saturating_sub(2));
        let i1 = (i0 + 1).min(w - 1);
        let j1 = (j0 + 1).min(hgt - 1);
        let tx = gx - i0 as f64;
        let ty = gy - j0 as f64;
        let v00 = raster.value(i0, j0);
        let v10 = raster.value(i1, j0);
        let v01 = raster.value(i0, j1);
        let v11 = raster.value(i1, j1);
        let v = (1.0 - tx) * (1.0 - ty) * v00
            + tx * (1.0 - ty) * v10
            + (1.0 - tx) * ty * v01
            + tx * ty * v11;
        out.push(LogDensity {
            log: v.max(DENSITY_FLOOR).ln(),
            outside: false,
        });
    }
    Ok(out)
}

/// Text grid export: header `origin_x origin_y cell_km width height`, then
/// row-major values, one grid row per line.
pub fn write_raster_text(raster: &DensityRaster) -> String {
    let g = raster.grid();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {} {} {}",
        g.origin_x, g.origin_y, g.cell_km, g.width, g.height
    );
    for iy in 0..g.height {
        let row = &raster.values()[iy * g.width..(iy + 1) * g.width];
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
    out
}

/// CSV export of log densities: `x_km,y_km,logf`.
pub fn write_log_density_csv(points: &[Point], logs: &[LogDensity]) -> String {
    let mut out = String::from("x_km,y_km,logf\n");
    for (p, l) in points.iter().zip(logs.iter()) {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, l.log);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_knn_graph, build_laplacian, Laplacian, PointCloud, WeightMode};
    use crate::kernels::build_context;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_around(cx: f64, cy: f64, half: f64, cell: f64) -> GridSpec {
        let n = (2.0 * half / cell).round() as usize;
        GridSpec::new(cx - half, cy - half, cell, n, n).unwrap()
    }

    fn random_events(n: usize, seed: u64, span: f64) -> Vec<Event> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Event::new(1, rng.random_range(0.0..span), rng.random_range(0.0..span)))
            .collect()
    }

    #[test]
    fn kde_single_point_peak() {
        let labeled = vec![Event::new(1, 2.0, 3.0)];
        let v = kde_predict(&labeled, &Bandwidth::identity(), Point::new(2.0, 3.0)).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn kde_two_points_equal_weights() {
        let h = Bandwidth::identity();
        let labeled = vec![Event::new(1, 0.0, 0.0), Event::new(1, 1.0, 1.0)];
        let x = Point::new(0.0, 0.0);
        let v = kde_predict(&labeled, &h, x).unwrap();
        let expect = 0.5 * h.peak() + 0.5 * h.eval(x, Point::new(1.0, 1.0));
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn kde_empty_labeled_is_error() {
        assert!(kde_predict(&[], &Bandwidth::identity(), Point::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn kde_predict_matches_double_loop_oracle() {
        let labeled = random_events(300, 5, 4.0);
        let h = Bandwidth::new(0.8, 0.2, 1.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let x = Point::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0));
            let got = kde_predict(&labeled, &h, x).unwrap();
            let mut oracle = 0.0;
            for e in &labeled {
                oracle += h.eval(x, e.location);
            }
            oracle /= labeled.len() as f64;
            assert!((got - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn kde_raster_matches_double_loop_oracle() {
        let labeled = random_events(120, 7, 3.0);
        let h = Bandwidth::new(0.5, -0.1, 0.7).unwrap();
        let grid = grid_around(1.5, 1.5, 4.0, 0.25);
        let raw = kde_raw_values(&labeled, &h, &grid).unwrap();
        for iy in 0..grid.height {
            for ix in 0..grid.width {
                let x = grid.center(ix, iy);
                let mut oracle = 0.0;
                for e in &labeled {
                    oracle += h.eval(x, e.location);
                }
                oracle /= labeled.len() as f64;
                assert!(
                    (raw[grid.index(ix, iy)] - oracle).abs() <= 1e-10,
                    "cell ({ix},{iy}): {} vs {}",
                    raw[grid.index(ix, iy)],
                    oracle
                );
            }
        }
    }

    #[test]
    fn kde_raster_integral_close_to_one_on_wide_window() {
        // ±5 std window captures all but ~1e-6 of the Gaussian mass.
        let labeled = random_events(40, 8, 2.0);
        let h = Bandwidth::new(0.25, 0.0, 0.25).unwrap();
        let grid = grid_around(1.0, 1.0, 1.0 + 5.0 * h.max_std() + 2.0, 0.1);
        let raw = kde_raw_values(&labeled, &h, &grid).unwrap();
        let integral: f64 = raw.iter().sum::<f64>() * grid.cell_area();
        assert!((integral - 1.0).abs() < 0.005, "integral {integral}");
    }

    fn warped_fixture(lambda: f64) -> (Vec<Event>, LaplacianContext, GridSpec) {
        // Cloud on the left half only; labeled points near the middle.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cloud_pts: Vec<Point> = (0..60)
            .map(|_| Point::new(rng.random_range(0.0..3.0), rng.random_range(0.0..4.0)))
            .collect();
        let cloud = PointCloud::from_points(cloud_pts, 0).unwrap();
        let lap = build_laplacian(&build_knn_graph(&cloud, 4, WeightMode::Binary).unwrap());
        let h = Bandwidth::new(0.8, 0.0, 0.8).unwrap();
        let ctx = build_context(&cloud, &lap, h, lambda).unwrap();
        let labeled: Vec<Event> = (0..25)
            .map(|_| Event::new(1, rng.random_range(2.0..3.5), rng.random_range(1.0..3.0)))
            .collect();
        let grid = GridSpec::new(-6.0, -5.0, 0.25, 72, 56).unwrap();
        (labeled, ctx, grid)
    }

    #[test]
    fn warped_raster_zero_lambda_matches_kde_raster() {
        let (labeled, ctx, grid) = warped_fixture(0.0);
        let raw_warp = warped_raw_values(&labeled, &ctx, &grid).unwrap();
        let raw_kde = kde_raw_values(&labeled, ctx.bandwidth(), &grid).unwrap();
        for (a, b) in raw_warp.iter().zip(raw_kde.iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn warped_raster_pre_clamp_integral_near_one_at_zero_lambda() {
        let (labeled, ctx, grid) = warped_fixture(0.0);
        let raw = warped_raw_values(&labeled, &ctx, &grid).unwrap();
        let integral: f64 = raw.iter().sum::<f64>() * grid.cell_area();
        assert!((integral - 1.0).abs() < 0.02, "integral {integral}");
    }

    #[test]
    fn warped_raster_normalizes_to_one() {
        for lambda in [0.0, 0.7, 2.5] {
            let (labeled, ctx, grid) = warped_fixture(lambda);
            let raster = warped_raster(&labeled, &ctx, &grid).unwrap();
            assert!((raster.integral() - 1.0).abs() <= 1e-6);
            assert!(raster.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn warping_concentrates_density_on_cloud_side_of_gap() {
        // Density mass ratio (cloud side : far side) grows with λ.
        let ratio_at = |lambda: f64| {
            let (labeled, ctx, grid) = warped_fixture(lambda);
            let raster = warped_raster(&labeled, &ctx, &grid).unwrap();
            let mut cloud_side = 0.0;
            let mut far_side = 0.0;
            for iy in 0..grid.height {
                for ix in 0..grid.width {
                    let p = grid.center(ix, iy);
                    if p.y < 0.0 || p.y > 4.0 {
                        continue;
                    }
                    if p.x < 3.0 && p.x > 0.0 {
                        cloud_side += raster.value(ix, iy);
                    } else if p.x > 3.5 {
                        far_side += raster.value(ix, iy);
                    }
                }
            }
            cloud_side / far_side
        };
        let r0 = ratio_at(0.0);
        let r2 = ratio_at(2.0);
        assert!(r2 > r0, "cloud-side ratio should grow with λ: {r0} -> {r2}");
    }

    #[test]
    fn clamping_is_noop_for_nonnegative_rasters() {
        let labeled = random_events(30, 9, 2.0);
        let h = Bandwidth::new(0.3, 0.0, 0.3).unwrap();
        let grid = grid_around(1.0, 1.0, 4.0, 0.25);
        let raw = kde_raw_values(&labeled, &h, &grid).unwrap();
        let mut raster = DensityRaster::from_values(grid, raw.clone()).unwrap();
        assert_eq!(raster.clamp_negative(), 0);
        assert_eq!(raster.values(), &raw[..]);
    }

    #[test]
    fn normalization_is_idempotent() {
        let labeled = random_events(30, 10, 2.0);
        let h = Bandwidth::new(0.3, 0.0, 0.3).unwrap();
        let grid = grid_around(1.0, 1.0, 3.0, 0.25);
        let mut raster = kde_raster(&labeled, &h, &grid).unwrap();
        let before = raster.values().to_vec();
        raster.normalize().unwrap();
        assert_eq!(raster.values(), &before[..]);
    }

    #[test]
    fn degenerate_all_zero_raster_rejected() {
        let grid = grid_around(0.0, 0.0, 1.0, 0.5);
        let mut raster = DensityRaster::from_values(grid, vec![0.0; grid.n_cells()]).unwrap();
        assert!(raster.normalize().is_err());
    }

    #[test]
    fn log_density_uniform_raster() {
        let grid = GridSpec::new(0.0, 0.0, 0.5, 8, 4).unwrap();
        let raster = DensityRaster::uniform(grid);
        let area = grid.n_cells() as f64 * grid.cell_area();
        let logs = log_density_at(&raster, &[Point::new(1.3, 0.7)]).unwrap();
        assert!((logs[0].log - (1.0 / area).ln()).abs() < 1e-12);
        assert!(!logs[0].outside);
    }

    #[test]
    fn log_density_outside_point_floored_and_flagged() {
        let grid = GridSpec::new(0.0, 0.0, 0.5, 8, 4).unwrap();
        let raster = DensityRaster::uniform(grid);
        let logs = log_density_at(&raster, &[Point::new(100.0, 100.0)]).unwrap();
        assert_eq!(logs[0].log, DENSITY_FLOOR.ln());
        assert!(logs[0].outside);
    }

    #[test]
    fn log_density_exact_at_cell_centers() {
        let grid = GridSpec::new(0.0, 0.0, 0.25, 10, 10).unwrap();
        let labeled = random_events(20, 11, 2.0);
        let raster = kde_raster(&labeled, &Bandwidth::new(0.4, 0.0, 0.4).unwrap(), &grid).unwrap();
        for (ix, iy) in [(0usize, 0usize), (3, 7), (9, 9), (5, 0)] {
            let p = grid.center(ix, iy);
            let logs = log_density_at(&raster, &[p]).unwrap();
            let expect = raster.value(ix, iy).max(DENSITY_FLOOR).ln();
            assert_eq!(logs[0].log, expect);
        }
    }

    #[test]
    fn log_density_requires_normalized_raster() {
        let grid = GridSpec::new(0.0, 0.0, 0.5, 4, 4).unwrap();
        let raster = DensityRaster::from_values(grid, vec![1.0; 16]).unwrap();
        assert!(log_density_at(&raster, &[Point::new(1.0, 1.0)]).is_err());
    }

    #[test]
    fn warped_raster_rejects_uncovered_labeled_points() {
        let (mut labeled, ctx, grid) = warped_fixture(1.0);
        labeled.push(Event::new(1, 1e4, 1e4));
        assert!(warped_raster(&labeled, &ctx, &grid).is_err());
    }

    #[test]
    fn raster_text_format_shape() {
        let grid = GridSpec::new(-1.0, 2.0, 0.5, 3, 2).unwrap();
        let raster = DensityRaster::uniform(grid);
        let text = write_raster_text(&raster);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "-1 2 0.5 3 2");
        assert_eq!(lines[1].split(' ').count(), 3);
    }

    #[test]
    fn single_point_cloud_warped_raster_works() {
        let cloud = PointCloud::from_points(vec![Point::new(1.0, 1.0)], 0).unwrap();
        let ctx = build_context(&cloud, &Laplacian::zeros(1), Bandwidth::identity(), 3.0).unwrap();
        let labeled = vec![Event::new(1, 1.0, 1.0)];
        let grid = grid_around(1.0, 1.0, 6.0, 0.25);
        let raster = warped_raster(&labeled, &ctx, &grid).unwrap();
        assert!((raster.integral() - 1.0).abs() <= 1e-6);
    }
}
