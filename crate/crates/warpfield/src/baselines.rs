//! Comparison baselines: the MEDIC industry-practice count predictor and
//! the unwarped-KDE baseline.
//!
//! MEDIC predicts each cell-period count as the average of the counts in
//! the same cell and hour-of-week slot over the preceding M weeks; its
//! counts normalize to a discrete density for log-score evaluation.

use std::fmt::Write as _;

use crate::data::{Event, EventStore};
use crate::density::{kde_raster, DensityRaster, GridSpec};
use crate::error::{Error, Result};
use crate::estimation::{BandwidthSelector, Prediction};
use crate::PERIODS_PER_WEEK;

/// Expected (or observed) counts per grid cell for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct CountGrid {
    grid: GridSpec,
    values: Vec<f64>,
}

impl CountGrid {
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GeometryMismatch(format!(
                "count grid has {} values for a {}x{} grid",
                values.len(),
                grid.width,
                grid.height
            )));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Validation("counts must be finite and >= 0".into()));
        }
        Ok(CountGrid { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        CountGrid {
            grid,
            values: vec![0.0; grid.n_cells()],
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

    /// Text export in the same grid format as density rasters.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            g.origin_x, g.origin_y, g.cell_km, g.width, g.height
        );
        for iy in 0..g.height {
            let row = &self.values[iy * g.width..(iy + 1) * g.width];
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
}

/// Bin events into per-cell counts; events outside the grid are ignored.
pub fn bin_events(events: &[Event], grid: GridSpec) -> CountGrid {
    let mut values = vec![0.0; grid.n_cells()];
    for e in events {
        if let Some((ix, iy)) = grid.cell_of(e.location) {
            values[grid.index(ix, iy)] += 1.0;
        }
    }
    CountGrid { grid, values }
}

/// MEDIC prediction for period `u`: per cell, the average of the counts in
/// the same cell over the periods u − 168m, m = 1..M.
pub fn medic_predict(store: &EventStore, u: u32, m: u32, grid: GridSpec) -> Result<CountGrid> {
    let required = PERIODS_PER_WEEK * m;
    if u <= required {
        return Err(Error::InsufficientHistory {
            period: u,
            required,
        });
    }
    let mut values = vec![0.0; grid.n_cells()];
    for k in 1..=m {
        let source = u - PERIODS_PER_WEEK * k;
        for e in store.events_at(source) {
            if let Some((ix, iy)) = grid.cell_of(e.location) {
                values[grid.index(ix, iy)] += 1.0;
            }
        }
    }
    let inv_m = 1.0 / m as f64;
    for v in values.iter_mut() {
        *v *= inv_m;
    }
    Ok(CountGrid { grid, values })
}

/// Total expected count: the sum of all cell values.
pub fn medic_total(grid: &CountGrid) -> f64 {
    grid.values.iter().sum()
}

/// Normalize cell counts to a discrete density by dividing by the total
/// count (and the cell area).
pub fn medic_density(grid: &CountGrid) -> Result<DensityRaster> {
    let total = medic_total(grid);
    if !(total > 0.0) {
        return Err(Error::DegenerateDensity(format!(
            "MEDIC total count is {total}; cannot form a density"
        )));
    }
    let mut raster = DensityRaster::from_values(grid.grid, grid.values.clone())?;
    raster.normalize()?;
    Ok(raster)
}

/// Unwarped-KDE baseline: Eq.-(1)-style raster with the bandwidth chosen by
/// the selector on the full labeled set, normalized. An empty labeled set
/// falls back to a uniform density and is flagged.
pub fn unwarped_kde_predict(
    store: &EventStore,
    u: u32,
    m: u32,
    selector: &dyn BandwidthSelector,
    grid: GridSpec,
) -> Result<Prediction> {
    let labeled = store.labeled_set(u, m)?;
    if labeled.is_empty() {
        return Ok(Prediction {
            raster: DensityRaster::uniform(grid),
            uniform_fallback: true,
        });
    }
    let pts: Vec<_> = labeled.iter().map(|e| e.location).collect();
    let (h, _regularized) = selector.select(&pts)?;
    Ok(Prediction {
        raster: kde_raster(&labeled, &h, &grid)?,
        uniform_fallback: false,
    })
}
