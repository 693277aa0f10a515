//! Spatio-temporal kernel-warped density estimation for point-process
//! demand prediction.
//!
//! To predict the spatial demand density of a future one-hour period, a
//! kernel density estimator is fit on the sparse labeled events from the
//! same hour of the preceding weeks, and its kernels are warped toward the
//! graph Laplacian of a point cloud sampled from all recent events. The
//! cloud encodes the geography (boundaries, corridors, neighborhoods) that
//! the labeled data alone is too sparse to reveal. Bandwidth scale and
//! degree of deformation are chosen per spatio-temporal component by
//! cross-validated surrogate optimization, and the fitted weekly cycle of
//! parameters is reused for online sliding-window prediction.
//!
//! Module map:
//! - [`data`]: event storage, period indexing, CSV ingestion, synthetic city generation
//! - [`geometry`]: point clouds, kNN adjacency, graph Laplacian
//! - [`kernels`]: Gaussian kernels, Gram machinery, the warped kernel
//! - [`density`]: rasterized density estimates, normalization, log-density lookup
//! - [`partition`]: k-means components and the cluster-count search
//! - [`estimation`]: bandwidth baseline, CV objective, stochastic RBF optimizer, weekly cycle
//! - [`baselines`]: MEDIC count predictor and the unwarped-KDE baseline
//! - [`evaluation`]: ALS / RMSE / Anscombe metrics and the method comparison harness

pub mod baselines;
pub mod data;
pub mod density;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod partition;

pub use error::{Error, Result};

/// A point in planar kilometre coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

/// Number of one-hour periods in a week.
pub const PERIODS_PER_WEEK: u32 = 168;

/// Hour-of-week slot of a period.
pub fn slot_of(period: u32) -> u32 {
    period % PERIODS_PER_WEEK
}

/// Deterministic seed derivation for nested randomized stages.
///
/// SplitMix64 over the base seed xored with the tags, so that per-slot and
/// per-component streams are independent of iteration order.
pub(crate) fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for (i, t) in tags.iter().enumerate() {
        z ^= t.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left((i as u32 % 63) + 1);
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}
