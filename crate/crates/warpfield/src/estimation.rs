//! Parameter estimation and prediction: the normal-reference bandwidth
//! baseline H_pi, the 5-fold cross-validated objective over (α, λ), the
//! stochastic RBF surrogate optimizer, weekly-cycle fitting, and
//! sliding-window prediction.
//!
//! The bandwidth is parametrized as H = α·H_pi so only two scalars are
//! searched per spatio-temporal component. Parameters are estimated once
//! per hour-of-week slot (168 plans form a weekly cycle) and reused for
//! online prediction with an M-week sliding window of labeled data.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::data::{Event, EventStore};
use crate::density::{kde_raw_values, log_density_at, warped_raster, DensityRaster, GridSpec};
use crate::error::{Error, Result};
use crate::geometry::{
    build_knn_graph, build_laplacian, sample_point_cloud, Laplacian, PointCloud, WeightMode,
};
use crate::kernels::{build_context, Bandwidth, LaplacianContext};
use crate::linalg::{lu_factor, LuFactors};
use crate::partition::{
    assign_to_components, kmeans, search_cluster_count, warm_start_k, Clustering,
    MIN_CLUSTER_SIZE,
};
use crate::{derive_seed, slot_of, Point, PERIODS_PER_WEEK};

/// Search bounds for the bandwidth scale α.
pub const ALPHA_BOUNDS: (f64, f64) = (0.01, 1.0);

/// Search bounds for the deformation degree λ.
pub const LAMBDA_BOUNDS: (f64, f64) = (0.0, 8.0);

/// Parameters for data-starved slots: midpoints of the typical ranges.
pub const FALLBACK_PARAMS: WarpParams = WarpParams {
    alpha: 0.15,
    lambda: 1.0,
};

/// Number of cross-validation folds.
pub const CV_FOLDS: usize = 5;

/// Bandwidth scale and deformation degree of one component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl WarpParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Validation(format!("alpha must be positive, got {alpha}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Validation(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(WarpParams { alpha, lambda })
    }

    pub fn in_search_bounds(&self) -> bool {
        self.alpha >= ALPHA_BOUNDS.0
            && self.alpha <= ALPHA_BOUNDS.1
            && self.lambda >= LAMBDA_BOUNDS.0
            && self.lambda <= LAMBDA_BOUNDS.1
    }
}

/// Pluggable reference-bandwidth selector (H_pi).
pub trait BandwidthSelector: Sync {
    /// Returns the selected bandwidth and whether regularization was needed.
    fn select(&self, points: &[Point]) -> Result<(Bandwidth, bool)>;
}

/// The bivariate normal-reference rule H_pi = n^(−1/3)·Σ̂ (the d = 2
/// normal-reference constant is exactly one).
pub struct NormalReference;

impl BandwidthSelector for NormalReference {
    fn select(&self, points: &[Point]) -> Result<(Bandwidth, bool)> {
        normal_reference_bandwidth(points)
    }
}

/// Normal-reference bandwidth: H_pi = n^(−1/3)·Σ̂ with Σ̂ the sample
/// covariance. A (near-)singular Σ̂ is regularized by adding
/// 1e−6·trace(Σ̂)·I and flagged.
pub fn normal_reference_bandwidth(points: &[Point]) -> Result<(Bandwidth, bool)> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Validation(format!(
            "bandwidth selection needs at least 3 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.y).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x - mx;
        let dy = p.y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let denom = nf - 1.0;
    let (mut cxx, mut cxy, mut cyy) = (sxx / denom, sxy / denom, syy / denom);

    // Eigenvalue ratio check for (near-)singularity.
    let mean = (cxx + cyy) / 2.0;
    let d = ((cxx - cyy) / 2.0).hypot(cxy);
    let (lmin, lmax) = (mean - d, mean + d);
    let mut regularized = false;
    if !(lmin > 1e-9 * lmax) {
        let trace = cxx + cyy;
        if !(trace > 0.0) {
            return Err(Error::Validation(
                "degenerate point set: zero covariance".into(),
            ));
        }
        cxx += 1e-6 * trace;
        cyy += 1e-6 * trace;
        let _ = cxy; // off-diagonal unchanged by the ridge
        regularized = true;
    }
    let scale = nf.powf(-1.0 / 3.0);
    let h = Bandwidth::new(scale * cxx, scale * cxy, scale * cyy)?;
    Ok((h, regularized))
}

/// Split labeled events into folds, stratified by source week: events of
/// each week are shuffled and dealt round-robin so every fold sees every
/// week. Returns per-fold index lists.
pub fn stratified_folds(labeled: &[Event], n_folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut by_week: Vec<(u32, Vec<usize>)> = Vec::new();
    for (i, e) in labeled.iter().enumerate() {
        let week = (e.period - 1) / PERIODS_PER_WEEK;
        match by_week.iter_mut().find(|(w, _)| *w == week) {
            Some((_, v)) => v.push(i),
            None => by_week.push((week, vec![i])),
        }
    }
    by_week.sort_by_key(|(w, _)| *w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); n_folds];
    let mut cursor = 0usize;
    for (_, mut idx) in by_week {
        // Fisher-Yates within the week group.
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        for i in idx {
            folds[cursor % n_folds].push(i);
            cursor += 1;
        }
    }
    folds
}

/// Geometry/config subset needed by the CV objective.
#[derive(Debug, Clone, Copy)]
pub struct CloudConfig {
    pub cloud_size: usize,
    pub neighbors: usize,
    pub weight_mode: WeightMode,
}

struct CvFold {
    train: Vec<Event>,
    val_points: Vec<Point>,
    h_pi: Bandwidth,
}

/// A prepared cross-validation problem for one component: the sampled
/// cloud, its Laplacian, and the stratified folds with per-fold reference
/// bandwidths. `objective` can then be evaluated repeatedly over (α, λ).
pub struct CvProblem {
    cloud: PointCloud,
    laplacian: Laplacian,
    folds: Vec<CvFold>,
    grid: GridSpec,
}

impl CvProblem {
    pub fn new(
        labeled: &[Event],
        past: &[Event],
        grid: GridSpec,
        cloud_cfg: &CloudConfig,
        cloud_seed: u64,
        fold_seed: u64,
    ) -> Result<Self> {
        if labeled.len() < MIN_CLUSTER_SIZE {
            return Err(Error::Validation(format!(
                "cross-validation needs at least {MIN_CLUSTER_SIZE} labeled events, got {}",
                labeled.len()
            )));
        }
        let cloud = sample_point_cloud(past, cloud_cfg.cloud_size, cloud_seed)?;
        let laplacian = if cloud.len() >= 2 {
            build_laplacian(&build_knn_graph(&cloud, cloud_cfg.neighbors, cloud_cfg.weight_mode)?)
        } else {
            Laplacian::zeros(cloud.len())
        };
        let fold_indices = stratified_folds(labeled, CV_FOLDS, fold_seed);
        let mut folds = Vec::with_capacity(CV_FOLDS);
        for held_out in &fold_indices {
            let mut in_fold = vec![false; labeled.len()];
            for &i in held_out {
                in_fold[i] = true;
            }
            let train: Vec<Event> = labeled
                .iter()
                .enumerate()
                .filter(|(i, _)| !in_fold[*i])
                .map(|(_, e)| *e)
                .collect();
            if train.is_empty() || held_out.is_empty() {
                return Err(Error::Validation(
                    "cross-validation fold with empty training or validation set".into(),
                ));
            }
            let (h_pi, _) = normal_reference_bandwidth(
                &train.iter().map(|e| e.location).collect::<Vec<_>>(),
            )?;
            folds.push(CvFold {
                train,
                val_points: held_out.iter().map(|&i| labeled[i].location).collect(),
                h_pi,
            });
        }
        Ok(CvProblem {
            cloud,
            laplacian,
            folds,
            grid,
        })
    }

    /// Mean validation log-likelihood over the folds: per fold, a warped
    /// raster fitted on the training events (H = α·H_pi of the training
    /// folds) is scored at the held-out points through the same clamp and
    /// normalize path prediction uses.
    pub fn objective(&self, params: WarpParams) -> Result<f64> {
        let mut total = 0.0;
        for fold in &self.folds {
            let h = fold.h_pi.scaled(params.alpha)?;
            let ctx = build_context(&self.cloud, &self.laplacian, h, params.lambda)?;
            let raster = warped_raster(&fold.train, &ctx, &self.grid)?;
            let logs = log_density_at(&raster, &fold.val_points)?;
            let mean = logs.iter().map(|l| l.log).sum::<f64>() / logs.len() as f64;
            total += mean;
        }
        Ok(total / self.folds.len() as f64)
    }
}

/// One-call CV objective: builds the problem (cloud, folds) from the seed
/// and evaluates the given parameters. Deterministic given the seed.
pub fn cv_objective(
    labeled: &[Event],
    past: &[Event],
    params: WarpParams,
    grid: GridSpec,
    cloud_cfg: &CloudConfig,
    seed: u64,
) -> Result<f64> {
    let problem = CvProblem::new(
        labeled,
        past,
        grid,
        cloud_cfg,
        derive_seed(seed, &[1]),
        derive_seed(seed, &[2]),
    )?;
    problem.objective(params)
}

/// Candidate-generation schedule of the stochastic RBF optimizer.
#[derive(Debug, Clone)]
pub struct RbfConfig {
    /// Latin-hypercube initial design size.
    pub initial_design: usize,
    /// Gaussian-perturbation candidates per iteration.
    pub n_perturb: usize,
    /// Uniform candidates per iteration.
    pub n_uniform: usize,
    /// Perturbation σ as a fraction of box width, cycled per iteration.
    pub sigma_cycle: Vec<f64>,
    /// Weight on the surrogate score (vs. distance score), cycled.
    pub weight_cycle: Vec<f64>,
}

impl Default for RbfConfig {
    fn default() -> Self {
        RbfConfig {
            initial_design: 8,
            n_perturb: 100,
            n_uniform: 100,
            sigma_cycle: vec![0.2, 0.05, 0.01],
            weight_cycle: vec![0.3, 0.5, 0.8, 0.95],
        }
    }
}

/// Rectangular search box.
#[derive(Debug, Clone, Copy)]
pub struct Bounds2 {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Bounds2 {
    pub fn warp_params() -> Self {
        Bounds2 {
            lo: [ALPHA_BOUNDS.0, LAMBDA_BOUNDS.0],
            hi: [ALPHA_BOUNDS.1, LAMBDA_BOUNDS.1],
        }
    }

    fn denorm(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.lo[0] + x[0] * (self.hi[0] - self.lo[0]),
            self.lo[1] + x[1] * (self.hi[1] - self.lo[1]),
        ]
    }
}

/// Result of a surrogate-optimization run (maximization).
#[derive(Debug, Clone)]
pub struct OptimizerRun {
    pub best: [f64; 2],
    pub best_value: f64,
    /// Incumbent value after each objective evaluation; non-decreasing.
    pub trace: Vec<f64>,
    pub surrogate_fallbacks: usize,
}

struct RbfSurrogate {
    centers: Vec<[f64; 2]>,
    coef: Vec<f64>,
    tail: [f64; 3],
}

impl RbfSurrogate {
    /// Cubic RBF with linear tail fitted through all evaluated points, via
    /// the saddle system [[Φ, P], [Pᵀ, 0]].
    fn fit(points: &[[f64; 2]], values: &[f64]) -> Result<Self> {
        let n = points.len();
        let dim = n + 3;
        let mut sys = ndarray::Array2::<f64>::zeros((dim, dim));
        for i in 0..n {
            for j in 0..n {
                let dx = points[i][0] - points[j][0];
                let dy = points[i][1] - points[j][1];
                let r = (dx * dx + dy * dy).sqrt();
                sys[(i, j)] = r * r * r;
            }
            sys[(i, n)] = 1.0;
            sys[(i, n + 1)] = points[i][0];
            sys[(i, n + 2)] = points[i][1];
            sys[(n, i)] = 1.0;
            sys[(n + 1, i)] = points[i][0];
            sys[(n + 2, i)] = points[i][1];
        }
        let lu: LuFactors = lu_factor(sys)?;
        let mut rhs = vec![0.0; dim];
        rhs[..n].copy_from_slice(values);
        lu.solve_in_place(&mut rhs);
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite surrogate coefficients".into()));
        }
        Ok(RbfSurrogate {
            centers: points.to_vec(),
            coef: rhs[..n].to_vec(),
            tail: [rhs[n], rhs[n + 1], rhs[n + 2]],
        })
    }

    fn predict(&self, x: [f64; 2]) -> f64 {
        let mut s = self.tail[0] + self.tail[1] * x[0] + self.tail[2] * x[1];
        for (c, &w) in self.centers.iter().zip(self.coef.iter()) {
            let dx = x[0] - c[0];
            let dy = x[1] - c[1];
            let r = (dx * dx + dy * dy).sqrt();
            s += w * r * r * r;
        }
        s
    }
}

/// Maximize an expensive objective over a 2-D box with the stochastic RBF
/// method: a Latin-hypercube design, then per iteration a cubic-RBF
/// surrogate fitted to all evaluations, candidate points drawn by Gaussian
/// perturbation of the incumbent (σ cycling) plus uniform draws, scored by
/// a cycled weighting of surrogate rank and distance-to-evaluated rank.
///
/// Never evaluates outside the bounds; the incumbent trace is
/// non-decreasing. A degenerate surrogate system falls back to a uniform
/// random candidate and is counted in `surrogate_fallbacks`.
pub fn stochastic_rbf_optimize(
    objective: &mut dyn FnMut([f64; 2]) -> Result<f64>,
    bounds: &Bounds2,
    budget: usize,
    seed: u64,
    cfg: &RbfConfig,
) -> Result<OptimizerRun> {
    let n0 = cfg.initial_design;
    if budget < n0 {
        return Err(Error::Validation(format!(
            "budget {budget} is below the initial design size {n0}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(budget);
    let mut values: Vec<f64> = Vec::with_capacity(budget);
    let mut trace = Vec::with_capacity(budget);
    let mut fallbacks = 0usize;

    // Latin hypercube: one stratum per design point and dimension.
    let mut strata: [Vec<usize>; 2] = [(0..n0).collect(), (0..n0).collect()];
    for s in strata.iter_mut() {
        for i in (1..n0).rev() {
            let j = rng.random_range(0..=i);
            s.swap(i, j);
        }
    }
    let mut best_idx = 0usize;
    for i in 0..n0 {
        let x = [
            (strata[0][i] as f64 + rng.random_range(0.0..1.0)) / n0 as f64,
            (strata[1][i] as f64 + rng.random_range(0.0..1.0)) / n0 as f64,
        ];
        let v = objective(bounds.denorm(x))?;
        points.push(x);
        values.push(v);
        if v > values[best_idx] {
            best_idx = i;
        }
        trace.push(values[best_idx]);
    }

    for t in n0..budget {
        let cycle = t - n0;
        let sigma = cfg.sigma_cycle[cycle % cfg.sigma_cycle.len()];
        let weight = cfg.weight_cycle[cycle % cfg.weight_cycle.len()];

        let surrogate = RbfSurrogate::fit(&points, &values);
        let candidate = match surrogate {
            Err(_) => {
                fallbacks += 1;
                [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]
            }
            Ok(model) => {
                let incumbent = points[best_idx];
                let normal = Normal::new(0.0, sigma).expect("positive sigma");
                let mut cands: Vec<[f64; 2]> = Vec::with_capacity(cfg.n_perturb + cfg.n_uniform);
                for _ in 0..cfg.n_perturb {
                    cands.push([
                        (incumbent[0] + normal.sample(&mut rng)).clamp(0.0, 1.0),
                        (incumbent[1] + normal.sample(&mut rng)).clamp(0.0, 1.0),
                    ]);
                }
                for _ in 0..cfg.n_uniform {
                    cands.push([rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
                }
                // Drop near-duplicates of evaluated points.
                let dmin_of = |c: &[f64; 2]| {
                    points
                        .iter()
                        .map(|p| {
                            let dx = c[0] - p[0];
                            let dy = c[1] - p[1];
                            (dx * dx + dy * dy).sqrt()
                        })
                        .fold(f64::INFINITY, f64::min)
                };
                let scored: Vec<([f64; 2], f64, f64)> = cands
                    .into_iter()
                    .filter_map(|c| {
                        let d = dmin_of(&c);
                        (d > 1e-9).then(|| {
                            let s = model.predict(c);
                            (c, s, d)
                        })
                    })
                    .collect();
                if scored.is_empty() {
                    fallbacks += 1;
                    [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]
                } else {
                    // Weighted-rank criterion: rank candidates by surrogate
                    // value (high is good) and by distance to evaluated
                    // points (far is good); pick the best combined rank.
                    let m = scored.len();
                    let mut by_value: Vec<usize> = (0..m).collect();
                    by_value.sort_by(|&a, &b| scored[b].1.partial_cmp(&scored[a].1).unwrap());
                    let mut by_dist: Vec<usize> = (0..m).collect();
                    by_dist.sort_by(|&a, &b| scored[b].2.partial_cmp(&scored[a].2).unwrap());
                    let mut value_rank = vec![0usize; m];
                    let mut dist_rank = vec![0usize; m];
                    for (r, &i) in by_value.iter().enumerate() {
                        value_rank[i] = r;
                    }
                    for (r, &i) in by_dist.iter().enumerate() {
                        dist_rank[i] = r;
                    }
                    let denom = (m - 1).max(1) as f64;
                    let mut best_c = scored[0].0;
                    let mut best_score = f64::INFINITY;
                    for i in 0..m {
                        let score = weight * (value_rank[i] as f64 / denom)
                            + (1.0 - weight) * (dist_rank[i] as f64 / denom);
                        if score < best_score {
                            best_score = score;
                            best_c = scored[i].0;
                        }
                    }
                    best_c
                }
            }
        };

        let v = objective(bounds.denorm(candidate))?;
        points.push(candidate);
        values.push(v);
        if v > values[best_idx] {
            best_idx = points.len() - 1;
        }
        trace.push(values[best_idx]);
    }

    Ok(OptimizerRun {
        best: bounds.denorm(points[best_idx]),
        best_value: values[best_idx],
        trace,
        surrogate_fallbacks: fallbacks,
    })
}

/// Full fitting configuration shared by fit, predict, and compare.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Sliding-window width in weeks.
    pub m_weeks: u32,
    pub cloud_size: usize,
    pub neighbors: usize,
    pub weight_mode: WeightMode,
    /// Normalization / scoring raster resolution (km).
    pub norm_cell_km: f64,
    /// Count-metric cell size (km); must be a whole number of km and an
    /// integer multiple of the normalization resolution.
    pub count_cell_km: f64,
    /// Objective evaluations per component.
    pub budget: usize,
    pub seed: u64,
    pub rbf: RbfConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            m_weeks: 8,
            cloud_size: 1000,
            neighbors: 5,
            weight_mode: WeightMode::Binary,
            norm_cell_km: 0.25,
            count_cell_km: 1.0,
            budget: 100,
            seed: 0,
            rbf: RbfConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_weeks == 0 {
            return Err(Error::Validation("m_weeks must be >= 1".into()));
        }
        if self.cloud_size < 2 {
            return Err(Error::Validation("cloud_size must be >= 2".into()));
        }
        if self.neighbors == 0 {
            return Err(Error::Validation("neighbors must be >= 1".into()));
        }
        if !(self.norm_cell_km > 0.0) || !(self.count_cell_km > 0.0) {
            return Err(Error::Validation("grid resolutions must be positive".into()));
        }
        if self.count_cell_km.fract() != 0.0 {
            return Err(Error::Validation(
                "count cell size must be a whole number of km".into(),
            ));
        }
        let ratio = self.count_cell_km / self.norm_cell_km;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Validation(format!(
                "count cell ({} km) must be an integer multiple of the normalization cell ({} km)",
                self.count_cell_km, self.norm_cell_km
            )));
        }
        if self.budget < self.rbf.initial_design {
            return Err(Error::Validation(format!(
                "budget {} is below the optimizer's initial design size {}",
                self.budget, self.rbf.initial_design
            )));
        }
        Ok(())
    }

    pub fn cloud_config(&self) -> CloudConfig {
        CloudConfig {
            cloud_size: self.cloud_size,
            neighbors: self.neighbors,
            weight_mode: self.weight_mode,
        }
    }
}

/// Parse a line-based `key = value` run config; unset keys keep their
/// defaults. Keys: `m_weeks`, `cloud_size`, `neighbors`, `weight_mode`
/// (binary|heat), `norm_cell_km`, `count_cell_km`, `budget`, `seed`.
pub fn parse_fit_config(text: &str) -> Result<FitConfig> {
    let mut cfg = FitConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| Error::Parse {
            line: line_no,
            message: format!("invalid {what} `{value}`"),
        };
        match key {
            "m_weeks" => cfg.m_weeks = value.parse().map_err(|_| bad("m_weeks"))?,
            "cloud_size" => cfg.cloud_size = value.parse().map_err(|_| bad("cloud_size"))?,
            "neighbors" => cfg.neighbors = value.parse().map_err(|_| bad("neighbors"))?,
            "weight_mode" => {
                cfg.weight_mode = match value {
                    "binary" => WeightMode::Binary,
                    "heat" => WeightMode::Heat,
                    _ => return Err(bad("weight_mode")),
                }
            }
            "norm_cell_km" => cfg.norm_cell_km = value.parse().map_err(|_| bad("norm_cell_km"))?,
            "count_cell_km" => {
                cfg.count_cell_km = value.parse().map_err(|_| bad("count_cell_km"))?
            }
            "budget" => cfg.budget = value.parse().map_err(|_| bad("budget"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Inclusive period range used for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitWindow {
    pub start: u32,
    pub end: u32,
}

impl FitWindow {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        if start == 0 || end < start {
            return Err(Error::Validation(format!(
                "invalid fit window [{start}, {end}]"
            )));
        }
        Ok(FitWindow { start, end })
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }
}

/// Fitted parameters of one spatial component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPlan {
    pub component: usize,
    pub params: WarpParams,
    pub cloud_seed: u64,
    /// Reference bandwidth snapshot from the fit-time labeled data.
    pub h_pi: Bandwidth,
    pub regularized: bool,
}

/// Clustering and per-component parameters of one hour-of-week slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodPlan {
    pub slot: u32,
    pub centroids: Vec<Point>,
    pub components: Vec<ComponentPlan>,
    /// Data-starved slot fitted with fallback parameters.
    pub fallback: bool,
}

/// The 168 per-slot plans reused across weeks, plus the evaluation grid and
/// the configuration they were fitted under.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyCycle {
    pub m_weeks: u32,
    pub cloud_size: usize,
    pub neighbors: usize,
    pub weight_mode: WeightMode,
    pub budget: usize,
    pub seed: u64,
    pub fine_grid: GridSpec,
    pub count_cell_km: f64,
    pub plans: Vec<PeriodPlan>,
}

impl WeeklyCycle {
    pub fn plan_for(&self, period: u32) -> &PeriodPlan {
        &self.plans[slot_of(period) as usize]
    }

    /// The 1-km (count-metric) grid aligned with the fine grid.
    pub fn count_grid(&self) -> Result<GridSpec> {
        let ratio = (self.count_cell_km / self.fine_grid.cell_km).round() as usize;
        if ratio == 0
            || self.fine_grid.width % ratio != 0
            || self.fine_grid.height % ratio != 0
        {
            return Err(Error::GeometryMismatch(format!(
                "fine grid {}x{} not divisible into {} km cells",
                self.fine_grid.width, self.fine_grid.height, self.count_cell_km
            )));
        }
        GridSpec::new(
            self.fine_grid.origin_x,
            self.fine_grid.origin_y,
            self.count_cell_km,
            self.fine_grid.width / ratio,
            self.fine_grid.height / ratio,
        )
    }
}

/// Derive the shared evaluation grid from the fit-window events: their
/// bounding box snapped outward to whole kilometres plus a margin of at
/// least three reference-bandwidth standard deviations.
pub fn derive_fine_grid(store: &EventStore, window: FitWindow, cfg: &FitConfig) -> Result<GridSpec> {
    let events = store.events_between(window.start, window.end);
    if events.is_empty() {
        return Err(Error::EmptyInput("events in fit window"));
    }
    let (min, max) = store
        .bounding_box(window.start, window.end)
        .expect("non-empty window");
    let pts: Vec<Point> = events.iter().map(|e| e.location).collect();
    let sigma = match normal_reference_bandwidth(&pts) {
        Ok((h, _)) => h.max_std(),
        Err(_) => 1.0,
    };
    let margin = (3.0 * sigma).ceil().max(1.0);
    let ox = min.x.floor() - margin;
    let oy = min.y.floor() - margin;
    let ex = max.x.ceil() + margin;
    let ey = max.y.ceil() + margin;
    let width = ((ex - ox) / cfg.norm_cell_km).round() as usize;
    let height = ((ey - oy) / cfg.norm_cell_km).round() as usize;
    GridSpec::new(ox, oy, cfg.norm_cell_km, width.max(1), height.max(1))
}

/// Fit the weekly cycle: for each of the 168 hour-of-week slots, gather the
/// labeled data of the last fittable target period in the window, choose
/// the cluster count by validation-likelihood hill-climb, and optimize
/// (α, λ) per component with the stochastic RBF method on the CV objective.
pub fn fit_weekly_cycle(
    store: &EventStore,
    window: FitWindow,
    cfg: &FitConfig,
) -> Result<WeeklyCycle> {
    cfg.validate()?;
    let needed = PERIODS_PER_WEEK * (cfg.m_weeks + 1);
    if window.len() < needed {
        return Err(Error::Validation(format!(
            "fit window of {} periods is shorter than M+1 weeks ({} periods)",
            window.len(),
            needed
        )));
    }
    let fine_grid = derive_fine_grid(store, window, cfg)?;

    let plans: Result<Vec<PeriodPlan>> = (0..PERIODS_PER_WEEK)
        .into_par_iter()
        .map(|slot| fit_slot(store, window, slot, cfg, fine_grid))
        .collect();

    Ok(WeeklyCycle {
        m_weeks: cfg.m_weeks,
        cloud_size: cfg.cloud_size,
        neighbors: cfg.neighbors,
        weight_mode: cfg.weight_mode,
        budget: cfg.budget,
        seed: cfg.seed,
        fine_grid,
        count_cell_km: cfg.count_cell_km,
        plans: plans?,
    })
}

fn fit_slot(
    store: &EventStore,
    window: FitWindow,
    slot: u32,
    cfg: &FitConfig,
    fine_grid: GridSpec,
) -> Result<PeriodPlan> {
    // Latest period of this slot whose whole labeled history lies in the window.
    let diff = (window.end + PERIODS_PER_WEEK - slot % PERIODS_PER_WEEK) % PERIODS_PER_WEEK;
    let u = window.end - diff;
    debug_assert_eq!(slot_of(u), slot);
    let labeled = store.labeled_set(u, cfg.m_weeks)?;
    let past = store.past_window(u, cfg.m_weeks)?;

    if labeled.len() < MIN_CLUSTER_SIZE {
        return Ok(fallback_plan(slot, &labeled, &past, cfg, &fine_grid));
    }

    let labeled_pts: Vec<Point> = labeled.iter().map(|e| e.location).collect();
    let k0 = warm_start_k(labeled.len());
    let mut fit_cb = |clustering: &Clustering| -> Result<(f64, Vec<ComponentPlan>)> {
        fit_components(&labeled, &past, clustering, slot, cfg, fine_grid)
    };
    let outcome = search_cluster_count(
        &labeled_pts,
        k0,
        derive_seed(cfg.seed, &[slot as u64, 11]),
        &mut fit_cb,
    )?;
    let components = match outcome.payload {
        Some(c) => c,
        // Labeled set too small for a search: fit the single forced cluster.
        None => fit_components(&labeled, &past, &outcome.clustering, slot, cfg, fine_grid)?.1,
    };
    Ok(PeriodPlan {
        slot,
        centroids: outcome.clustering.centroids,
        components,
        fallback: false,
    })
}

fn fallback_plan(
    slot: u32,
    labeled: &[Event],
    past: &[Event],
    cfg: &FitConfig,
    fine_grid: &GridSpec,
) -> PeriodPlan {
    let pts: Vec<Point> = if !labeled.is_empty() {
        labeled.iter().map(|e| e.location).collect()
    } else {
        past.iter().map(|e| e.location).collect()
    };
    let centroid = if pts.is_empty() {
        fine_grid.center(fine_grid.width / 2, fine_grid.height / 2)
    } else {
        let n = pts.len() as f64;
        Point::new(
            pts.iter().map(|p| p.x).sum::<f64>() / n,
            pts.iter().map(|p| p.y).sum::<f64>() / n,
        )
    };
    let (h_pi, regularized) = normal_reference_bandwidth(&pts)
        .map(|(h, r)| (h, r))
        .unwrap_or((Bandwidth::identity(), true));
    PeriodPlan {
        slot,
        centroids: vec![centroid],
        components: vec![ComponentPlan {
            component: 0,
            params: FALLBACK_PARAMS,
            cloud_seed: derive_seed(cfg.seed, &[slot as u64, 21, 0]),
            h_pi,
            regularized,
        }],
        fallback: true,
    }
}

fn fit_components(
    labeled: &[Event],
    past: &[Event],
    clustering: &Clustering,
    slot: u32,
    cfg: &FitConfig,
    fine_grid: GridSpec,
) -> Result<(f64, Vec<ComponentPlan>)> {
    let past_pts: Vec<Point> = past.iter().map(|e| e.location).collect();
    let past_labels = assign_to_components(clustering, &past_pts);
    let k = clustering.k;
    let mut plans = Vec::with_capacity(k);
    let mut weighted_score = 0.0;
    let mut weight_sum = 0.0;
    for c in 0..k {
        let comp_labeled: Vec<Event> = labeled
            .iter()
            .zip(clustering.labels.iter())
            .filter(|(_, &l)| l == c)
            .map(|(e, _)| *e)
            .collect();
        let comp_past: Vec<Event> = past
            .iter()
            .zip(past_labels.iter())
            .filter(|(_, &l)| l == c)
            .map(|(e, _)| *e)
            .collect();
        let cloud_seed = derive_seed(cfg.seed, &[slot as u64, 31, k as u64, c as u64]);
        let problem = CvProblem::new(
            &comp_labeled,
            &comp_past,
            fine_grid,
            &cfg.cloud_config(),
            cloud_seed,
            derive_seed(cfg.seed, &[slot as u64, 41, k as u64, c as u64]),
        )?;
        let run = stochastic_rbf_optimize(
            &mut |x| problem.objective(WarpParams::new(x[0], x[1])?),
            &Bounds2::warp_params(),
            cfg.budget,
            derive_seed(cfg.seed, &[slot as u64, 51, k as u64, c as u64]),
            &cfg.rbf,
        )?;
        let comp_pts: Vec<Point> = comp_labeled.iter().map(|e| e.location).collect();
        let (h_pi, regularized) = normal_reference_bandwidth(&comp_pts)?;
        let weight = comp_labeled.len() as f64;
        weighted_score += run.best_value * weight;
        weight_sum += weight;
        plans.push(ComponentPlan {
            component: c,
            params: WarpParams::new(run.best[0], run.best[1])?,
            cloud_seed,
            h_pi,
            regularized,
        });
    }
    Ok((weighted_score / weight_sum, plans))
}

/// A prediction-ready period: per-component contexts built, raster not yet
/// rendered. Splitting the two lets callers measure rendering alone.
pub struct PreparedPeriod {
    grid: GridSpec,
    components: Vec<PreparedComponent>,
    uniform_fallback: bool,
}

struct PreparedComponent {
    ctx: LaplacianContext,
    labeled: Vec<Event>,
    weight: f64,
}

/// A rendered prediction.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub raster: DensityRaster,
    /// No labeled data: a uniform density over the cycle grid was returned.
    pub uniform_fallback: bool,
}

/// Build the per-component warp contexts for predicting period `u`: look up
/// the slot plan, assign the current labeled and past-window events to its
/// components, and sample each component's cloud with the stored seed.
pub fn prepare_period(store: &EventStore, u: u32, cycle: &WeeklyCycle) -> Result<PreparedPeriod> {
    if cycle.plans.len() != PERIODS_PER_WEEK as usize {
        return Err(Error::Validation(format!(
            "weekly cycle has {} plans, expected {}",
            cycle.plans.len(),
            PERIODS_PER_WEEK
        )));
    }
    let plan = cycle.plan_for(u);
    let labeled = store.labeled_set(u, cycle.m_weeks)?;
    if labeled.is_empty() {
        return Ok(PreparedPeriod {
            grid: cycle.fine_grid,
            components: Vec::new(),
            uniform_fallback: true,
        });
    }
    let past = store.past_window(u, cycle.m_weeks)?;
    let clustering = Clustering {
        k: plan.centroids.len(),
        centroids: plan.centroids.clone(),
        labels: Vec::new(),
    };
    let labeled_labels =
        assign_to_components(&clustering, &labeled.iter().map(|e| e.location).collect::<Vec<_>>());
    let past_labels =
        assign_to_components(&clustering, &past.iter().map(|e| e.location).collect::<Vec<_>>());

    let mut components = Vec::new();
    for comp in &plan.components {
        let c = comp.component;
        let comp_labeled: Vec<Event> = labeled
            .iter()
            .zip(labeled_labels.iter())
            .filter(|(_, &l)| l == c)
            .map(|(e, _)| *e)
            .collect();
        if comp_labeled.is_empty() {
            continue;
        }
        let comp_past: Vec<Event> = past
            .iter()
            .zip(past_labels.iter())
            .filter(|(_, &l)| l == c)
            .map(|(e, _)| *e)
            .collect();
        let cloud = sample_point_cloud(&comp_past, cycle.cloud_size, comp.cloud_seed)?;
        let laplacian = if cloud.len() >= 2 {
            build_laplacian(&build_knn_graph(&cloud, cycle.neighbors, cycle.weight_mode)?)
        } else {
            Laplacian::zeros(cloud.len())
        };
        let h = comp.h_pi.scaled(comp.params.alpha)?;
        let ctx = build_context(&cloud, &laplacian, h, comp.params.lambda)?;
        let weight = comp_labeled.len() as f64 / labeled.len() as f64;
        components.push(PreparedComponent {
            ctx,
            labeled: comp_labeled,
            weight,
        });
    }
    Ok(PreparedPeriod {
        grid: cycle.fine_grid,
        components,
        uniform_fallback: false,
    })
}

impl PreparedPeriod {
    /// Render the blended, normalized density raster.
    pub fn render(&self) -> Result<Prediction> {
        if self.uniform_fallback {
            return Ok(Prediction {
                raster: DensityRaster::uniform(self.grid),
                uniform_fallback: true,
            });
        }
        let mut acc = vec![0.0; self.grid.n_cells()];
        for comp in &self.components {
            let raster = warped_raster(&comp.labeled, &comp.ctx, &self.grid)?;
            for (a, v) in acc.iter_mut().zip(raster.values().iter()) {
                *a += comp.weight * v;
            }
        }
        let mut raster = DensityRaster::from_values(self.grid, acc)?;
        raster.normalize()?;
        Ok(Prediction {
            raster,
            uniform_fallback: false,
        })
    }
}

/// Predict the demand density of period `u` using the fitted weekly cycle
/// and the store's most recent M weeks of data.
pub fn predict_period(store: &EventStore, u: u32, cycle: &WeeklyCycle) -> Result<Prediction> {
    prepare_period(store, u, cycle)?.render()
}

const CYCLE_HEADER: &str = "warpfield-cycle v1";

/// Serialize a weekly cycle to the versioned line-based text format.
pub fn write_cycle(cycle: &WeeklyCycle) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CYCLE_HEADER}");
    let _ = writeln!(out, "m_weeks {}", cycle.m_weeks);
    let _ = writeln!(out, "cloud_size {}", cycle.cloud_size);
    let _ = writeln!(out, "neighbors {}", cycle.neighbors);
    let mode = match cycle.weight_mode {
        WeightMode::Binary => "binary",
        WeightMode::Heat => "heat",
    };
    let _ = writeln!(out, "weight_mode {mode}");
    let _ = writeln!(out, "budget {}", cycle.budget);
    let _ = writeln!(out, "seed {}", cycle.seed);
    let _ = writeln!(out, "count_cell_km {}", cycle.count_cell_km);
    let g = cycle.fine_grid;
    let _ = writeln!(
        out,
        "grid {} {} {} {} {}",
        g.origin_x, g.origin_y, g.cell_km, g.width, g.height
    );
    for plan in &cycle.plans {
        let _ = writeln!(
            out,
            "slot {} fallback {} components {}",
            plan.slot,
            if plan.fallback { 1 } else { 0 },
            plan.components.len()
        );
        for c in &plan.centroids {
            let _ = writeln!(out, "centroid {} {}", c.x, c.y);
        }
        for comp in &plan.components {
            let (h11, h12, h22) = comp.h_pi.entries();
            let _ = writeln!(
                out,
                "component {} alpha {} lambda {} cloud_seed {} hpi {} {} {} regularized {}",
                comp.component,
                comp.params.alpha,
                comp.params.lambda,
                comp.cloud_seed,
                h11,
                h12,
                h22,
                if comp.regularized { 1 } else { 0 }
            );
        }
    }
    out
}

/// Parse a serialized weekly cycle, validating structure and bounds.
pub fn read_cycle(text: &str) -> Result<WeeklyCycle> {
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, msg: String| Error::Parse {
        line: line + 1,
        message: msg,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty cycle file".into()))?;
    if header.trim() != CYCLE_HEADER {
        return Err(parse_err(0, format!("expected `{CYCLE_HEADER}`")));
    }

    let mut m_weeks = None;
    let mut cloud_size = None;
    let mut neighbors = None;
    let mut weight_mode = None;
    let mut budget = None;
    let mut seed = None;
    let mut count_cell_km = None;
    let mut fine_grid = None;
    let mut plans: Vec<PeriodPlan> = Vec::new();

    #[derive(Default)]
    struct PendingPlan {
        slot: u32,
        fallback: bool,
        n_components: usize,
        centroids: Vec<Point>,
        components: Vec<ComponentPlan>,
    }
    let mut pending: Option<PendingPlan> = None;

    let finish =
        |p: PendingPlan, line: usize, plans: &mut Vec<PeriodPlan>| -> Result<()> {
            if p.components.len() != p.n_components || p.centroids.len() != p.n_components {
                return Err(parse_err(
                    line,
                    format!(
                        "slot {} declared {} components, found {} centroids / {} components",
                        p.slot,
                        p.n_components,
                        p.centroids.len(),
                        p.components.len()
                    ),
                ));
            }
            plans.push(PeriodPlan {
                slot: p.slot,
                centroids: p.centroids,
                components: p.components,
                fallback: p.fallback,
            });
            Ok(())
        };

    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let key = tok.next().unwrap();
        let rest: Vec<&str> = tok.collect();
        let f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| parse_err(idx, format!("invalid number `{s}`")))
        };
        let u = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| parse_err(idx, format!("invalid integer `{s}`")))
        };
        match key {
            "m_weeks" => m_weeks = Some(u(rest[0])? as u32),
            "cloud_size" => cloud_size = Some(u(rest[0])? as usize),
            "neighbors" => neighbors = Some(u(rest[0])? as usize),
            "weight_mode" => {
                weight_mode = Some(match rest[0] {
                    "binary" => WeightMode::Binary,
                    "heat" => WeightMode::Heat,
                    other => return Err(parse_err(idx, format!("unknown weight mode `{other}`"))),
                })
            }
            "budget" => budget = Some(u(rest[0])? as usize),
            "seed" => seed = Some(u(rest[0])?),
            "count_cell_km" => count_cell_km = Some(f(rest[0])?),
            "grid" => {
                if rest.len() != 5 {
                    return Err(parse_err(idx, "grid needs 5 fields".into()));
                }
                fine_grid = Some(GridSpec::new(
                    f(rest[0])?,
                    f(rest[1])?,
                    f(rest[2])?,
                    u(rest[3])? as usize,
                    u(rest[4])? as usize,
                )?);
            }
            "slot" => {
                if let Some(p) = pending.take() {
                    finish(p, idx, &mut plans)?;
                }
                if rest.len() != 5 || rest[1] != "fallback" || rest[3] != "components" {
                    return Err(parse_err(
                        idx,
                        "expected `slot N fallback B components K`".into(),
                    ));
                }
                pending = Some(PendingPlan {
                    slot: u(rest[0])? as u32,
                    fallback: rest[2] == "1",
                    n_components: u(rest[4])? as usize,
                    centroids: Vec::new(),
                    components: Vec::new(),
                });
            }
            "centroid" => {
                let p = pending
                    .as_mut()
                    .ok_or_else(|| parse_err(idx, "centroid before any slot".into()))?;
                p.centroids.push(Point::new(f(rest[0])?, f(rest[1])?));
            }
            "component" => {
                let p = pending
                    .as_mut()
                    .ok_or_else(|| parse_err(idx, "component before any slot".into()))?;
                if rest.len() != 13 {
                    return Err(parse_err(idx, "component line needs 13 fields".into()));
                }
                let params = WarpParams::new(f(rest[2])?, f(rest[4])?)?;
                if !params.in_search_bounds() {
                    return Err(parse_err(
                        idx,
                        format!(
                            "component parameters ({}, {}) outside search bounds",
                            params.alpha, params.lambda
                        ),
                    ));
                }
                p.components.push(ComponentPlan {
                    component: u(rest[0])? as usize,
                    params,
                    cloud_seed: u(rest[6])?,
                    h_pi: Bandwidth::new(f(rest[8])?, f(rest[9])?, f(rest[10])?)?,
                    regularized: rest[12] == "1",
                });
            }
            other => return Err(parse_err(idx, format!("unknown key `{other}`"))),
        }
    }
    if let Some(p) = pending.take() {
        finish(p, usize::MAX - 1, &mut plans)?;
    }
    if plans.len() != PERIODS_PER_WEEK as usize {
        return Err(Error::Validation(format!(
            "cycle has {} slots, expected {}",
            plans.len(),
            PERIODS_PER_WEEK
        )));
    }
    for (i, p) in plans.iter().enumerate() {
        if p.slot as usize != i {
            return Err(Error::Validation(format!(
                "cycle slots out of order: slot {} at position {i}",
                p.slot
            )));
        }
    }
    Ok(WeeklyCycle {
        m_weeks: m_weeks.ok_or_else(|| Error::Validation("cycle missing m_weeks".into()))?,
        cloud_size: cloud_size.ok_or_else(|| Error::Validation("cycle missing cloud_size".into()))?,
        neighbors: neighbors.ok_or_else(|| Error::Validation("cycle missing neighbors".into()))?,
        weight_mode: weight_mode
            .ok_or_else(|| Error::Validation("cycle missing weight_mode".into()))?,
        budget: budget.ok_or_else(|| Error::Validation("cycle missing budget".into()))?,
        seed: seed.ok_or_else(|| Error::Validation("cycle missing seed".into()))?,
        fine_grid: fine_grid.ok_or_else(|| Error::Validation("cycle missing grid".into()))?,
        count_cell_km: count_cell_km
            .ok_or_else(|| Error::Validation("cycle missing count_cell_km".into()))?,
        plans,
    })
}
